#pragma once

#include <cmath>
#include <vector>

#include "sepoa/approx.hpp"
#include "sepoa/core.hpp"
#include "sepoa/envs.hpp"
#include "sepoa/reward.hpp"

namespace sepoa::testing {

/// Transitions with state (t, 0, 0, 0) and r_gt = reward(t).
template <class F>
std::vector<Transition> ramp(int length, F reward, int action = 4) {
  std::vector<Transition> out;
  for (int t = 0; t < length; ++t) {
    Transition tr;
    tr.state = {static_cast<double>(t), 0.0, 0.0, 0.0};
    tr.next_state = {static_cast<double>(t + 1), 0.0, 0.0, 0.0};
    tr.action = action;
    tr.r_gt = reward(t);
    out.push_back(std::move(tr));
  }
  return out;
}

inline std::vector<Transition> flat(int length, double r = 0.0) {
  return ramp(length, [r](int) { return r; });
}

/// Sets every weight to zero and the output bias so that the net emits `value`
/// through its tanh head.
inline void make_constant(Mlp& net, double value) {
  std::fill(net.params().begin(), net.params().end(), 0.0);
  net.params().back() = std::atanh(value);
}

inline double rel_error(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

/// Max relative error between an analytic gradient and central differences.
template <class Params, class Grad, class LossOfParams>
double gradient_check(Params& params, const Grad& analytic, LossOfParams loss,
                      double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss();
    params[i] = keep - h;
    const double down = loss();
    params[i] = keep;
    const double numeric = (up - down) / (2 * h);
    if (std::abs(numeric) < 1e-7 && std::abs(analytic[i]) < 1e-7) continue;
    worst = std::max(worst, rel_error(numeric, analytic[i]));
  }
  return worst;
}

/// Member i emits tanh(w[i]) (or tanh(w[0]) if w has one entry) on steps
/// taken with `action` and 0 on every other step.
inline void make_action_reward(RewardEnsemble& ens, int state_dim, int action, const std::vector<double>& w) {
  const int in = ens.input_dim();
  for (std::size_t i = 0; i < ens.size(); ++i) {
    auto& p = ens.member(i).params();
    std::fill(p.begin(), p.end(), 0.0);
    const int h = ens.member(i).layer_sizes()[1];
    const std::size_t layer1 = static_cast<std::size_t>(in + 1) * h;
    const std::size_t layer2 = layer1 + static_cast<std::size_t>(h + 1) * h;
    p[static_cast<std::size_t>(state_dim + action) * h] = 1.0;
    p[layer1] = 1.0;
    p[layer2] = w.size() == 1 ? w[0] : w[i];
  }
}

/// Steps with states uniform in the box [-bounds, bounds]; random actions
/// unless `action` is given.
inline std::vector<Transition> random_steps(int length, Rng& rng, const std::vector<double>& bounds,
                                            int action = -1, int action_count = 9) {
  std::vector<Transition> out;
  for (int t = 0; t < length; ++t) {
    Transition tr;
    for (double b : bounds) tr.state.push_back(b * (2.0 * uniform01(rng) - 1.0));
    tr.next_state = tr.state;
    tr.action = action >= 0 ? action : static_cast<int>(uniform_index(rng, action_count));
    out.push_back(std::move(tr));
  }
  return out;
}

inline Segment segment_of(const std::vector<Transition>& steps, int traj_id = 0) {
  Segment s;
  s.traj_id = traj_id;
  s.transitions = steps;
  return s;
}

}  // namespace sepoa::testing
