#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <set>
#include <vector>

#include "propguard/explorer.hpp"
#include "propguard/scorer.hpp"
#include "propguard/sim.hpp"

namespace propguard::grpo {

// Featurized softmax policy over frontier + STOP. Frontier candidates and
// STOP use separate weight vectors because their observations differ.
constexpr int kActionFeatureDim = 10;
constexpr int kStopFeatureDim = 5;

struct PolicyParameters {
  std::vector<double> w_action;  // F
  std::vector<double> w_stop;    // F_s
  double temperature = 1.0;

  static PolicyParameters zeros();

  void for_each(const std::function<void(double&)>& fn);
  void for_each(const std::function<void(double)>& fn) const;
};

struct RewardConfig {
  double lambda_f1 = 1.0;
  double lambda_prior = 0.1;
  double gamma = 0.5;  // per-node expansion cost
};

struct TrainConfig {
  int group_size = 8;   // G
  double lr = 0.05;     // for the featurized policy; an LLM policy would use far less
  int steps = 300;
  double eps_clip = 0.2;
  double beta_kl = 0.001;
  uint64_t rng_seed = 0;
  int top_k = 3;
  int n_reveal = 2;
  int budget = 12;
  // Softmax temperature baked into the trained policy. Values above 1 keep
  // rollout sampling broad enough that rare actions (STOP in particular)
  // continue to be tried; argmax decoding at inference is unaffected.
  double sample_temperature = 1.0;
};

// Features of a frontier candidate, computed from visible information only.
std::vector<double> featurize(const explore::ExplorationState& state, const graph::STGraph& g,
                              const std::vector<double>& priors, int candidate);

std::vector<double> featurize_stop(const explore::ExplorationState& state,
                                   const graph::STGraph& g, const std::vector<double>& priors,
                                   const std::vector<int>& frontier);

// Probabilities over sorted(frontier) followed by STOP; sums to 1.
std::vector<double> policy_distribution(const PolicyParameters& params,
                                        const explore::ExplorationState& state,
                                        const graph::STGraph& g,
                                        const std::vector<double>& priors);

double f1_node(const std::set<int>& pred, const std::set<int>& truth);

// R(H) = lambda_f1 * F1_node(V(H), V(Z)) + lambda_prior * sum_{v in H} (p(v) - gamma).
double reward(const explore::SuspiciousSubgraph& h, const sim::ProvenanceGraph& z,
              const std::vector<double>& priors, const RewardConfig& cfg, int n_agents);

// (r_i - mean) / (std + 1e-8), population std.
std::vector<double> group_advantages(const std::vector<double>& rewards);

struct GroupRollout {
  std::vector<explore::RolloutResult> rollouts;  // G trajectories
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct ObjectiveResult {
  double objective = 0.0;
  double kl = 0.0;  // mean exact categorical KL(pi_theta || pi_ref) per visited state
  PolicyParameters gradient;
};

// Clipped surrogate with group-relative advantages and a KL penalty against
// the reference policy. Trajectories must have been sampled under theta_old;
// forced stops never appear as decisions, so they carry no loss.
ObjectiveResult grpo_objective(const PolicyParameters& theta, const PolicyParameters& theta_old,
                               const PolicyParameters& theta_ref, const GroupRollout& group,
                               double eps_clip, double beta_kl, const graph::STGraph& g,
                               const std::vector<double>& priors);

class LearnedPolicy final : public explore::ExplorationPolicy {
 public:
  explicit LearnedPolicy(PolicyParameters params, bool sample = false)
      : params_(std::move(params)), sample_(sample) {}

  int choose(const explore::ExplorationState& state, const graph::STGraph& g,
             const std::vector<double>& priors, const std::vector<int>& frontier,
             Rng& rng) override;

  const PolicyParameters& params() const { return params_; }

 private:
  PolicyParameters params_;
  bool sample_;
};

struct TrainEnv {
  const graph::STGraph* graph = nullptr;
  std::vector<double> priors;
  std::vector<int> seeds;  // scorer top-K, as at inference
  sim::ProvenanceGraph z;
};

// GE-GRPO loop: per step sample an environment and seed, roll out G
// trajectories under the frozen snapshot, one ascent step on the objective.
PolicyParameters train_inspector(const std::vector<TrainEnv>& envs, const TrainConfig& cfg,
                                 const RewardConfig& reward_cfg,
                                 std::vector<double>* reward_trace = nullptr);

// Builds training environments from attack episodes with a trained scorer.
// Every episode must carry nonempty provenance.
std::vector<TrainEnv> make_train_envs(const std::vector<graph::STGraph>& graphs,
                                      const std::vector<const sim::EpisodeRecord*>& episodes,
                                      const scorer::ScorerParameters& scorer_params, int top_k);

void save_checkpoint(const PolicyParameters& params, std::ostream& out);
PolicyParameters load_policy_checkpoint(std::istream& in);

}  // namespace propguard::grpo
