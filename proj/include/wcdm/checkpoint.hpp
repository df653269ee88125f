#pragma once

#include "wcdm/core.hpp"

#include <string>
#include <vector>

namespace wcdm::checkpoint {

struct Entry {
    std::string name;
    Tensor tensor;
};

/// Flat binary container of named arrays. Layout, all little-endian:
/// u32 entry count, then per entry u32 name length, name bytes,
/// 4 x u32 extents (b,c,h,w), raw f32 payload.
void save(const std::string& path, const std::vector<Entry>& entries);
std::vector<Entry> load(const std::string& path);

const Tensor* find(const std::vector<Entry>& entries, const std::string& name);

}  // namespace wcdm::checkpoint
