#include "propguard/inspector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "propguard/error.hpp"

namespace propguard::grpo {

PolicyParameters PolicyParameters::zeros() {
  PolicyParameters p;
  p.w_action.assign(kActionFeatureDim, 0.0);
  p.w_stop.assign(kStopFeatureDim, 0.0);
  p.temperature = 1.0;
  return p;
}

void PolicyParameters::for_each(const std::function<void(double&)>& fn) {
  for (double& v : w_action) fn(v);
  for (double& v : w_stop) fn(v);
}

void PolicyParameters::for_each(const std::function<void(double)>& fn) const {
  for (double v : w_action) fn(v);
  for (double v : w_stop) fn(v);
}

namespace {

// Payload-visibility channels of a node in the full-state view: the
// response scalar plus the inbox/memory/tool channel scalars.
void visibility_channels(const graph::STGraph& g, int node, double out[4]) {
  const std::vector<double>& x = g.nodes[node].state_feat;
  out[0] = x[g.n_labels];
  out[1] = x[g.d_r + 0];
  out[2] = x[g.d_r + 1];
  out[3] = x[g.d_r + 2];
}

}  // namespace

std::vector<double> featurize(const explore::ExplorationState& state, const graph::STGraph& g,
                              const std::vector<double>& priors, int candidate) {
  require(state.visible_nodes.count(candidate), Errc::illegal_action,
          "featurize candidate is not visible");
  std::vector<double> f(kActionFeatureDim, 0.0);
  f[0] = priors[candidate];

  double vis[4];
  visibility_channels(g, candidate, vis);
  f[1] = *std::max_element(vis, vis + 4);
  f[2] = (vis[0] + vis[1] + vis[2] + vis[3]) / 4.0;

  int temporal_links = 0, comm_links = 0;
  auto count_edge = [&](const graph::STEdge& e, int other) {
    if (!state.suspicious_nodes.count(other)) return;
    if (e.etype == graph::EdgeType::temporal)
      ++temporal_links;
    else
      ++comm_links;
  };
  for (int e : g.out_edges[candidate]) count_edge(g.edges[e], g.edges[e].dst);
  for (int e : g.in_edges[candidate]) count_edge(g.edges[e], g.edges[e].src);
  f[3] = temporal_links;
  f[4] = comm_links / 4.0;

  // Signed round delta to the nearest subgraph node: negative means the
  // candidate sits in an earlier round, i.e. upstream of the hypothesis.
  int round_c = g.nodes[candidate].round;
  int best_delta = g.rounds;
  for (int v : state.suspicious_nodes) {
    int delta = round_c - g.nodes[v].round;
    if (std::abs(delta) < std::abs(best_delta) ||
        (std::abs(delta) == std::abs(best_delta) && delta < best_delta))
      best_delta = delta;
  }
  f[5] = static_cast<double>(best_delta) / std::max(1, g.rounds - 1);

  int degree = 0;
  for (int e : g.out_edges[candidate])
    if (state.visible_nodes.count(g.edges[e].dst)) ++degree;
  for (int e : g.in_edges[candidate])
    if (state.visible_nodes.count(g.edges[e].src)) ++degree;
  f[6] = degree / 8.0;

  f[7] = static_cast<double>(state.suspicious_nodes.size()) / (state.budget + 1);
  f[8] = static_cast<double>(state.step) / std::max(1, state.budget);
  f[9] = 1.0;
  return f;
}

std::vector<double> featurize_stop(const explore::ExplorationState& state,
                                   const graph::STGraph& /*g*/,
                                   const std::vector<double>& priors,
                                   const std::vector<int>& frontier) {
  std::vector<double> f(kStopFeatureDim, 0.0);
  double sum = 0.0, mx = 0.0;
  for (int u : frontier) {
    sum += priors[u];
    mx = std::max(mx, priors[u]);
  }
  f[0] = frontier.empty() ? 0.0 : sum / frontier.size();
  f[1] = mx;
  f[2] = static_cast<double>(state.suspicious_nodes.size()) / (state.budget + 1);
  f[3] = static_cast<double>(state.step) / std::max(1, state.budget);
  f[4] = 1.0;
  return f;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Softmax over [frontier..., STOP] given action/stop features.
std::vector<double> distribution_from_features(const PolicyParameters& params,
                                               const std::vector<std::vector<double>>& node_feats,
                                               const std::vector<double>& stop_feat) {
  size_t n = node_feats.size() + 1;
  std::vector<double> logits(n, 0.0);
  for (size_t i = 0; i + 1 < n; ++i)
    logits[i] = dot(params.w_action, node_feats[i]) / params.temperature;
  logits[n - 1] = dot(params.w_stop, stop_feat) / params.temperature;
  double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  std::vector<double> probs(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

}  // namespace

std::vector<double> policy_distribution(const PolicyParameters& params,
                                        const explore::ExplorationState& state,
                                        const graph::STGraph& g,
                                        const std::vector<double>& priors) {
  std::vector<int> fr = explore::frontier(state, g);
  std::vector<std::vector<double>> node_feats;
  node_feats.reserve(fr.size());
  for (int u : fr) node_feats.push_back(featurize(state, g, priors, u));
  return distribution_from_features(params, node_feats, featurize_stop(state, g, priors, fr));
}

double f1_node(const std::set<int>& pred, const std::set<int>& truth) {
  if (pred.empty() && truth.empty()) return 1.0;
  if (pred.empty() || truth.empty()) return 0.0;
  size_t inter = 0;
  for (int v : pred) inter += truth.count(v);
  if (inter == 0) return 0.0;
  double precision = static_cast<double>(inter) / pred.size();
  double recall = static_cast<double>(inter) / truth.size();
  return 2.0 * precision * recall / (precision + recall);
}

double reward(const explore::SuspiciousSubgraph& h, const sim::ProvenanceGraph& z,
              const std::vector<double>& priors, const RewardConfig& cfg, int n_agents) {
  std::set<int> truth = graph::provenance_node_indices(z, n_agents);
  double r = cfg.lambda_f1 * f1_node(h.nodes, truth);
  double prior_term = 0.0;
  for (int v : h.nodes) {
    require(v >= 0 && v < static_cast<int>(priors.size()), Errc::invalid_input,
            "reward priors do not cover the subgraph");
    prior_term += priors[v] - cfg.gamma;
  }
  return r + cfg.lambda_prior * prior_term;
}

std::vector<double> group_advantages(const std::vector<double>& rewards) {
  require(rewards.size() >= 2, Errc::invalid_input, "group size must be >= 2");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= rewards.size();
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= rewards.size();
  double denom = std::sqrt(var) + 1e-8;
  std::vector<double> adv(rewards.size());
  for (size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

ObjectiveResult grpo_objective(const PolicyParameters& theta, const PolicyParameters& theta_old,
                               const PolicyParameters& theta_ref, const GroupRollout& group,
                               double eps_clip, double beta_kl, const graph::STGraph& g,
                               const std::vector<double>& priors) {
  const size_t big_g = group.rollouts.size();
  require(big_g >= 1 && group.advantages.size() == big_g, Errc::invalid_input,
          "group rollouts/advantages mismatch");

  ObjectiveResult out;
  out.gradient = PolicyParameters::zeros();
  out.gradient.temperature = 0.0;
  const double tau = theta.temperature;

  double pg_sum = 0.0;
  double kl_sum = 0.0;
  size_t total_steps = 0;
  for (const explore::RolloutResult& r : group.rollouts) total_steps += r.decisions.size();

  std::vector<double> grad_action(kActionFeatureDim, 0.0);
  std::vector<double> grad_stop(kStopFeatureDim, 0.0);

  for (size_t i = 0; i < big_g; ++i) {
    const explore::RolloutResult& r = group.rollouts[i];
    const double adv = group.advantages[i];
    const size_t len = r.decisions.size();
    if (len == 0) continue;

    for (const explore::DecisionRecord& d : r.decisions) {
      std::vector<std::vector<double>> node_feats;
      node_feats.reserve(d.action_set.size());
      for (int u : d.action_set) node_feats.push_back(featurize(d.state, g, priors, u));
      std::vector<double> stop_feat = featurize_stop(d.state, g, priors, d.action_set);

      std::vector<double> p = distribution_from_features(theta, node_feats, stop_feat);
      std::vector<double> p_old = distribution_from_features(theta_old, node_feats, stop_feat);
      std::vector<double> p_ref = distribution_from_features(theta_ref, node_feats, stop_feat);

      size_t a_idx;
      if (d.action == explore::kStopAction) {
        a_idx = p.size() - 1;
      } else {
        a_idx = static_cast<size_t>(
            std::lower_bound(d.action_set.begin(), d.action_set.end(), d.action) -
            d.action_set.begin());
      }

      // Expected features under pi_theta, split by parameter block.
      std::vector<double> exp_action(kActionFeatureDim, 0.0);
      std::vector<double> exp_stop(kStopFeatureDim, 0.0);
      for (size_t u = 0; u + 1 < p.size(); ++u)
        for (int k = 0; k < kActionFeatureDim; ++k) exp_action[k] += p[u] * node_feats[u][k];
      for (int k = 0; k < kStopFeatureDim; ++k) exp_stop[k] = p.back() * stop_feat[k];

      // Clipped surrogate term.
      double ratio = p[a_idx] / p_old[a_idx];
      double clipped = std::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip);
      double t_unclipped = ratio * adv;
      double t_clipped = clipped * adv;
      pg_sum += std::min(t_unclipped, t_clipped) / (big_g * len);
      if (t_unclipped <= t_clipped) {
        // d(ratio * adv)/dw = adv * ratio * dlog pi(a)/dw
        double coeff = adv * ratio / (big_g * len);
        for (int k = 0; k < kActionFeatureDim; ++k) {
          double dlog = ((a_idx + 1 < p.size() ? node_feats[a_idx][k] : 0.0) - exp_action[k]) / tau;
          grad_action[k] += coeff * dlog;
        }
        for (int k = 0; k < kStopFeatureDim; ++k) {
          double dlog = ((a_idx + 1 == p.size() ? stop_feat[k] : 0.0) - exp_stop[k]) / tau;
          grad_stop[k] += coeff * dlog;
        }
      }
      // Else: min picked the clipped branch outside the clip band where the
      // derivative is exactly zero.

      // Exact categorical KL(pi_theta || pi_ref) and its gradient.
      if (total_steps > 0) {
        double kl = 0.0;
        for (size_t u = 0; u < p.size(); ++u) kl += p[u] * std::log(p[u] / p_ref[u]);
        kl_sum += kl;
        double w = beta_kl / total_steps;
        for (size_t u = 0; u < p.size(); ++u) {
          double ru = std::log(p[u] / p_ref[u]);
          for (int k = 0; k < kActionFeatureDim; ++k) {
            double dpi = p[u] * (((u + 1 < p.size()) ? node_feats[u][k] : 0.0) - exp_action[k]) / tau;
            grad_action[k] -= w * dpi * ru;
          }
          for (int k = 0; k < kStopFeatureDim; ++k) {
            double dpi = p[u] * (((u + 1 == p.size()) ? stop_feat[k] : 0.0) - exp_stop[k]) / tau;
            grad_stop[k] -= w * dpi * ru;
          }
        }
      }
    }
  }

  out.kl = total_steps > 0 ? kl_sum / total_steps : 0.0;
  out.objective = pg_sum - beta_kl * out.kl;
  out.gradient.w_action = std::move(grad_action);
  out.gradient.w_stop = std::move(grad_stop);
  return out;
}

int LearnedPolicy::choose(const explore::ExplorationState& state, const graph::STGraph& g,
                          const std::vector<double>& priors, const std::vector<int>& frontier,
                          Rng& rng) {
  std::vector<double> p = policy_distribution(params_, state, g, priors);
  size_t pick;
  if (sample_) {
    double u = rng.next_unit();
    double acc = 0.0;
    pick = p.size() - 1;
    for (size_t i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
  } else {
    pick = static_cast<size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  return pick + 1 == p.size() ? explore::kStopAction : frontier[pick];
}

std::vector<TrainEnv> make_train_envs(const std::vector<graph::STGraph>& graphs,
                                      const std::vector<const sim::EpisodeRecord*>& episodes,
                                      const scorer::ScorerParameters& scorer_params, int top_k) {
  require(graphs.size() == episodes.size(), Errc::invalid_input,
          "graphs/episodes size mismatch");
  std::vector<TrainEnv> envs;
  envs.reserve(graphs.size());
  for (size_t i = 0; i < graphs.size(); ++i) {
    require(!episodes[i]->provenance.nodes.empty(), Errc::invalid_input,
            "inspector training requires attack episodes with nonempty provenance");
    TrainEnv env;
    env.graph = &graphs[i];
    env.priors = scorer::score_forward(scorer_params, graphs[i]);
    env.seeds = scorer::select_seeds(env.priors, top_k);
    env.z = episodes[i]->provenance;
    envs.push_back(std::move(env));
  }
  return envs;
}

PolicyParameters train_inspector(const std::vector<TrainEnv>& envs, const TrainConfig& cfg,
                                 const RewardConfig& reward_cfg,
                                 std::vector<double>* reward_trace) {
  require(!envs.empty(), Errc::invalid_input, "inspector training corpus is empty");
  require(cfg.group_size >= 2, Errc::invalid_config, "group size must be >= 2");
  require(cfg.eps_clip > 0.0 && cfg.eps_clip < 1.0, Errc::invalid_config,
          "eps_clip must be in (0,1)");

  // The optimization starts from a base policy, not from uniform weights:
  // expand by prior, lean toward stopping once the best frontier candidate
  // stops looking suspicious. This plays the role of the task instructions a
  // prompted inspector would start from; a uniform start starves STOP of
  // positive experiences (every early stop truncates recall and is punished)
  // long before its good contexts are ever sampled.
  PolicyParameters theta = PolicyParameters::zeros();
  theta.w_action[0] = 2.0;   // candidate prior
  theta.w_action[5] = -0.5;  // signed round delta: prefer walking upstream
  theta.w_stop[1] = -4.0;    // max frontier prior
  theta.w_stop[3] = 2.0;     // step/budget ramp
  theta.w_stop[4] = 0.5;     // bias
  theta.temperature = cfg.sample_temperature;
  const PolicyParameters theta_ref = theta;  // initial snapshot
  Rng rng(derive_seed(cfg.rng_seed, 0x67727065ull));

  for (int step = 0; step < cfg.steps; ++step) {
    const TrainEnv& env = envs[rng.next_below(static_cast<uint32_t>(envs.size()))];
    int seed = env.seeds[rng.next_below(static_cast<uint32_t>(env.seeds.size()))];

    PolicyParameters theta_old = theta;
    LearnedPolicy sampler(theta_old, /*sample=*/true);
    GroupRollout group;
    for (int gidx = 0; gidx < cfg.group_size; ++gidx) {
      Rng roll_rng = rng.split(static_cast<uint64_t>(step) * 131 + gidx);
      group.rollouts.push_back(explore::rollout(sampler, *env.graph, env.priors, seed,
                                                cfg.n_reveal, cfg.budget, roll_rng));
      group.rewards.push_back(reward(group.rollouts.back().subgraph, env.z, env.priors,
                                     reward_cfg, env.graph->n_agents));
    }
    group.advantages = group_advantages(group.rewards);
    if (reward_trace) {
      double mean = 0.0;
      for (double r : group.rewards) mean += r;
      reward_trace->push_back(mean / cfg.group_size);
    }

    ObjectiveResult obj = grpo_objective(theta, theta_old, theta_ref, group, cfg.eps_clip,
                                         cfg.beta_kl, *env.graph, env.priors);
    for (int k = 0; k < kActionFeatureDim; ++k)
      theta.w_action[k] += cfg.lr * obj.gradient.w_action[k];
    for (int k = 0; k < kStopFeatureDim; ++k) theta.w_stop[k] += cfg.lr * obj.gradient.w_stop[k];
  }
  return theta;
}

namespace {

void write_vec(std::ostream& out, const char* name, const std::vector<double>& v) {
  out << name;
  char buf[40];
  for (double x : v) {
    std::snprintf(buf, sizeof buf, " %.17g", x);
    out << buf;
  }
  out << "\n";
}

}  // namespace

void save_checkpoint(const PolicyParameters& params, std::ostream& out) {
  out << "inspector-ckpt v1 F=" << params.w_action.size() << " Fs=" << params.w_stop.size()
      << "\n";
  write_vec(out, "w_action", params.w_action);
  write_vec(out, "w_stop", params.w_stop);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", params.temperature);
  out << "temperature " << buf << "\n";
}

PolicyParameters load_policy_checkpoint(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw Error(Errc::io_error, "empty inspector checkpoint");
  int f = 0, fs = 0;
  if (std::sscanf(header.c_str(), "inspector-ckpt v1 F=%d Fs=%d", &f, &fs) != 2)
    throw Error(Errc::io_error, "bad inspector checkpoint header: " + header);
  PolicyParameters p;
  auto read_line = [&](const std::string& expect, size_t count) {
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::io_error, "inspector checkpoint truncated");
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    if (name != expect)
      throw Error(Errc::io_error, "inspector checkpoint expected '" + expect + "'");
    std::vector<double> vals(count);
    for (size_t i = 0; i < count; ++i)
      if (!(ls >> vals[i])) throw Error(Errc::io_error, "inspector checkpoint array short");
    return vals;
  };
  p.w_action = read_line("w_action", static_cast<size_t>(f));
  p.w_stop = read_line("w_stop", static_cast<size_t>(fs));
  p.temperature = read_line("temperature", 1)[0];
  return p;
}

}  // namespace propguard::grpo
