#pragma once

// Concrete preloading strategies: the learned range policy and the fixed-range baselines.

#include <memory>
#include <optional>

#include "deload/demand.hpp"
#include "deload/policy.hpp"
#include "deload/rng.hpp"
#include "deload/sim.hpp"

namespace deload {

/// Demand-ranked selection with fixed-length tasks (deload_1s / deload_5s), or a
/// learned range when `net` is set (deload / deload_no_wte).
class DemandStrategy final : public Strategy {
 public:
  DemandStrategy(StrategyKind kind, const MlpNet* net, PolicyConfig policy, std::uint64_t seed, bool stochastic)
      : kind_(kind), net_(net), policy_(std::move(policy)), rng_(seed), stochastic_(stochastic) {
    if (uses_policy_net(kind_) && !net_) throw ConfigError(std::string(to_string(kind_)) + " needs a policy network");
  }

  [[nodiscard]] StrategyKind kind() const override { return kind_; }

  std::optional<std::size_t> select_video(const DecisionContext& ctx) override {
    const SurvivalFn survival = with_estimates() ? SurvivalFn(fused_survival) : SurvivalFn(uniform_survival);
    return demand_decision(ctx.playlist, ctx.sim.b_max_s, survival).selected;
  }

  RangeChoice choose_range(const DecisionContext& ctx, std::size_t index) override {
    if (auto fixed = fixed_range_s(kind_)) return {*fixed, std::nullopt};
    auto state = build_state(ctx.playlist, index, ctx.network.throughput_mbps, ctx.network.rtt_ms, policy_,
                             with_estimates());
    const auto out = policy_forward(*net_, state);
    const auto action = sample_action(out.dist, rng_, policy_, stochastic_);
    PolicyStep step{std::move(state.features), action.raw, action.log_prob, out.value};
    return {action.duration_s, std::move(step)};
  }

 private:
  [[nodiscard]] bool with_estimates() const { return kind_ != StrategyKind::deload_no_wte; }

  StrategyKind kind_;
  const MlpNet* net_;
  PolicyConfig policy_;
  Rng rng_;
  bool stochastic_;
};

/// First video with less than B_max buffered ahead, fixed 1 s tasks.
class NaiveStrategy final : public Strategy {
 public:
  [[nodiscard]] StrategyKind kind() const override { return StrategyKind::naive_1s; }
  std::optional<std::size_t> select_video(const DecisionContext& ctx) override {
    return naive_select(ctx.playlist, ctx.sim.b_max_s);
  }
  RangeChoice choose_range(const DecisionContext&, std::size_t) override { return {1.0, std::nullopt}; }
};

/// `net` is required for the learned kinds. Stochastic sampling is for training
/// rollouts; evaluation uses the mean action.
inline std::unique_ptr<Strategy> make_strategy(StrategyKind kind, const MlpNet* net, const PolicyConfig& policy,
                                               std::uint64_t seed, bool stochastic = false) {
  if (kind == StrategyKind::naive_1s) return std::make_unique<NaiveStrategy>();
  return std::make_unique<DemandStrategy>(kind, net, policy, seed, stochastic);
}

}  // namespace deload
