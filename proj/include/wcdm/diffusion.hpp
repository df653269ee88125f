#pragma once

#include "wcdm/rng.hpp"
#include "wcdm/tape.hpp"

#include <functional>
#include <ostream>

namespace wcdm::diffusion {

/// Variance schedule; cumulative products kept in double and abar(0) == 1.
class NoiseSchedule {
public:
    NoiseSchedule() = default;

    int steps() const { return T_; }
    double beta(int t) const {
        require(t >= 1 && t <= T_, "beta: t out of range");
        return beta_[std::size_t(t - 1)];
    }
    double alpha(int t) const { return 1.0 - beta(t); }
    double abar(int t) const {
        require(t >= 0 && t <= T_, "abar: t out of range");
        return abar_[std::size_t(t)];
    }

    friend NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

private:
    int T_ = 0;
    std::vector<double> beta_;
    std::vector<double> abar_;  // abar_[t], t = 0..T, abar_[0] = 1
};

inline NoiseSchedule make_schedule(int T, double beta_start = 1e-4, double beta_end = 2e-2) {
    require(T >= 1, "make_schedule: T must be positive");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
            "make_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T_ = T;
    s.beta_.resize(std::size_t(T));
    s.abar_.resize(std::size_t(T) + 1);
    s.abar_[0] = 1.0;
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : double(t - 1) / double(T - 1);
        const double b = beta_start + frac * (beta_end - beta_start);
        s.beta_[std::size_t(t - 1)] = b;
        prod *= 1.0 - b;
        s.abar_[std::size_t(t)] = prod;
    }
    return s;
}

inline void schedule_csv(const NoiseSchedule& s, std::ostream& os) {
    os << "t,beta_t,alpha_bar_t\n";
    char line[96];
    for (int t = 1; t <= s.steps(); ++t) {
        std::snprintf(line, sizeof line, "%d,%.12g,%.12g\n", t, s.beta(t), s.abar(t));
        os << line;
    }
}

/// Implicit sampling timetable from the S-step indexing t = (i-1)*T/S + 1.
struct SamplerPlan {
    int S = 0;
    int T = 0;
    std::vector<std::pair<int, int>> pairs;  // (t, t_next), t descending, last (1, 0)
};

inline SamplerPlan make_plan(int S, int T) {
    require(S >= 1 && T >= 1, "make_plan: S and T must be positive");
    require(S <= T, "make_plan: S exceeds T");
    require(T % S == 0, "make_plan: S must divide T");
    SamplerPlan p;
    p.S = S;
    p.T = T;
    const int step = T / S;
    for (int i = S; i >= 1; --i) {
        const int t = (i - 1) * step + 1;
        const int tn = i > 1 ? (i - 2) * step + 1 : 0;
        p.pairs.emplace_back(t, tn);
    }
    return p;
}

inline void plan_csv(const SamplerPlan& p, std::ostream& os) {
    os << "t,t_next\n";
    for (auto [t, tn] : p.pairs) os << t << "," << tn << "\n";
}

// ---------------------------------------------------------------------------
// forward diffusion

/// x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps, with per-sample t.
template <class S>
TensorT<S> q_sample(const TensorT<S>& x0, const std::vector<int>& ts, const TensorT<S>& eps,
                    const NoiseSchedule& sched) {
    require_same_shape(x0, eps, "q_sample");
    require(int(ts.size()) == x0.shape.b, "q_sample: one t per batch element");
    std::vector<S> ca(ts.size()), ce(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        require(ts[i] >= 1 && ts[i] <= sched.steps(), "q_sample: t out of range");
        const double ab = sched.abar(ts[i]);
        ca[i] = S(std::sqrt(ab));
        ce[i] = S(std::sqrt(1.0 - ab));
    }
    return ops::add(ops::scale_per_sample(x0, ca), ops::scale_per_sample(eps, ce));
}

template <class S>
TensorT<S> q_sample(const TensorT<S>& x0, int t, const TensorT<S>& eps, const NoiseSchedule& sched) {
    return q_sample(x0, std::vector<int>(std::size_t(x0.shape.b), t), eps, sched);
}

template <class S>
VarT<S> q_sample(VarT<S> x0, const std::vector<int>& ts, VarT<S> eps, const NoiseSchedule& sched) {
    TapeT<S>& tape = *x0.tape;
    require(int(ts.size()) == tape.value(x0).shape.b, "q_sample: one t per batch element");
    std::vector<S> ca(ts.size()), ce(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        require(ts[i] >= 1 && ts[i] <= sched.steps(), "q_sample: t out of range");
        const double ab = sched.abar(ts[i]);
        ca[i] = S(std::sqrt(ab));
        ce[i] = S(std::sqrt(1.0 - ab));
    }
    return add(scale_per_sample(x0, ca), scale_per_sample(eps, ce));
}

// ---------------------------------------------------------------------------
// implicit reverse update

/// Deterministic update
///   x_next = sqrt(abar_next) * (x_t - sqrt(1-abar_t)*eps) / sqrt(abar_t)
///          + sqrt(1-abar_next) * eps,
/// folded to c1*x_t + c2*eps so that t_next == t is the exact identity.
inline std::pair<double, double> ddim_coeffs(int t, int t_next, const NoiseSchedule& sched) {
    require(t >= 1 && t <= sched.steps(), "ddim_step: t out of range");
    require(t_next >= 0 && t_next <= t, "ddim_step: need 0 <= t_next <= t");
    const double at = sched.abar(t);
    const double an = sched.abar(t_next);
    const double c1 = std::sqrt(an / at);
    const double c2 = std::sqrt(1.0 - an) - c1 * std::sqrt(1.0 - at);
    return {c1, c2};
}

template <class S>
TensorT<S> ddim_step(const TensorT<S>& x_t, const TensorT<S>& eps_pred, int t, int t_next,
                     const NoiseSchedule& sched) {
    require_same_shape(x_t, eps_pred, "ddim_step");
    auto [c1, c2] = ddim_coeffs(t, t_next, sched);
    return ops::add(ops::scale(x_t, S(c1)), ops::scale(eps_pred, S(c2)));
}

template <class S>
VarT<S> ddim_step(VarT<S> x_t, VarT<S> eps_pred, int t, int t_next, const NoiseSchedule& sched) {
    auto [c1, c2] = ddim_coeffs(t, t_next, sched);
    return add(scale(x_t, S(c1)), scale(eps_pred, S(c2)));
}

// ---------------------------------------------------------------------------
// sampling loop

template <class S>
using DenoiseFn = std::function<TensorT<S>(const TensorT<S>& x, const TensorT<S>& cond, int t)>;

template <class S>
using DenoiseVarFn = std::function<VarT<S>(VarT<S> x, VarT<S> cond, int t)>;

/// Reverse denoising from a seeded standard-normal draw; pure in
/// (estimator parameters, condition, seed).
template <class S>
TensorT<S> sample(const DenoiseFn<S>& estimator, const TensorT<S>& condition, const NoiseSchedule& sched,
                  const SamplerPlan& plan, std::uint64_t seed) {
    TensorT<S> x = normal_tensor<S>(condition.shape, seed);
    for (auto [t, tn] : plan.pairs) {
        TensorT<S> e = estimator(x, condition, t);
        require(e.shape == x.shape, "sample: estimator output shape mismatch");
        x = ddim_step(x, e, t, tn, sched);
    }
    return x;
}

/// Same loop on a tape; gradients flow through every step.
template <class S>
VarT<S> sample(TapeT<S>& tape, const DenoiseVarFn<S>& estimator, VarT<S> condition, const NoiseSchedule& sched,
               const SamplerPlan& plan, std::uint64_t seed) {
    VarT<S> x = tape.leaf(normal_tensor<S>(tape.value(condition).shape, seed), false);
    for (auto [t, tn] : plan.pairs) {
        VarT<S> e = estimator(x, condition, t);
        require(tape.value(e).shape == tape.value(x).shape, "sample: estimator output shape mismatch");
        x = ddim_step(x, e, t, tn, sched);
    }
    return x;
}

}  // namespace wcdm::diffusion
