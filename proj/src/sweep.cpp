#include "propguard/sweep.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "propguard/adapter.hpp"
#include "propguard/defense.hpp"
#include "propguard/error.hpp"
#include "propguard/metrics.hpp"

namespace propguard::harness {

SweepConfig SweepConfig::from(const Config& cfg) {
  SweepConfig sc;
  auto list_or = [&](const char* key, std::vector<std::string> fallback) {
    auto v = cfg.get_list(key);
    return v.empty() ? fallback : v;
  };
  sc.topologies = list_or("topologies", sc.topologies);
  sc.attacks = list_or("attacks", sc.attacks);
  sc.variants = list_or("defense_variants", sc.variants);
  sc.seeds.clear();
  for (const std::string& s : list_or("seeds", {"1"})) sc.seeds.push_back(std::stoull(s));
  for (const std::string& s : cfg.get_list("k_values")) sc.k_values.push_back(std::stoi(s));
  sc.episodes_per_cell = cfg.get_int("episodes_per_cell", sc.episodes_per_cell);
  sc.n_agents = cfg.get_int("n_agents", sc.n_agents);
  sc.edge_prob = cfg.get_double("edge_prob", sc.edge_prob);
  sc.rounds = cfg.get_int("rounds", sc.rounds);
  sc.n_targets = cfg.get_int("attack_targets", sc.n_targets);
  sc.strength = cfg.get_double("attack_strength", sc.strength);
  sc.stealth = cfg.get_double("attack_stealth", sc.stealth);
  sc.susceptibility = cfg.get_double("attack_susceptibility", sc.susceptibility);
  sc.n_labels = cfg.get_int("n_labels", sc.n_labels);
  sc.alpha = cfg.get_double("alpha", sc.alpha);
  sc.top_k = cfg.get_int("K", sc.top_k);
  sc.n_reveal = cfg.get_int("n_reveal", sc.n_reveal);
  sc.budget = cfg.get_int("budget", sc.budget);
  sc.policy = cfg.get_string("policy", sc.policy);
  sc.diagnoser = cfg.get_string("diagnoser", sc.diagnoser);
  sc.oracle_eta = cfg.get_double("oracle_eta", sc.oracle_eta);
  sc.heuristic_threshold = cfg.get_double("heuristic_threshold", sc.heuristic_threshold);
  sc.topk_k = cfg.get_int("topk_k", sc.topk_k);
  sc.adapter_url = cfg.get_string("adapter_url", adapter_url_from_env());
  sc.adapter_timeout_ms = cfg.get_int("adapter_timeout_ms", sc.adapter_timeout_ms);
  sc.workers = cfg.get_int("workers", sc.workers);
  sc.out_csv = cfg.get_string("out", sc.out_csv);
  return sc;
}

namespace {

struct Cell {
  std::string topology;
  std::string attack;
  std::string variant_label;
  defense::DefenseVariant variant = defense::DefenseVariant::full;
  int top_k = 3;
  uint64_t seed = 0;
};

std::unique_ptr<explore::ExplorationPolicy> make_policy(
    const SweepConfig& cfg, const std::optional<grpo::PolicyParameters>& policy_params) {
  if (cfg.policy == "trained") {
    require(policy_params.has_value(), Errc::invalid_config,
            "policy=trained requires an inspector checkpoint");
    return std::make_unique<grpo::LearnedPolicy>(*policy_params);
  }
  if (cfg.policy == "greedy") return explore::heuristic_policy(explore::Heuristic::greedy);
  if (cfg.policy == "bfs") return explore::heuristic_policy(explore::Heuristic::bfs);
  if (cfg.policy == "random") return explore::heuristic_policy(explore::Heuristic::random);
  throw Error(Errc::invalid_config, "unknown policy '" + cfg.policy + "'");
}

std::unique_ptr<defense::Diagnoser> make_diagnoser(const SweepConfig& cfg, uint64_t seed) {
  if (cfg.diagnoser == "oracle")
    return std::make_unique<defense::OracleDiagnoser>(cfg.oracle_eta, seed);
  if (cfg.diagnoser == "heuristic")
    return std::make_unique<defense::HeuristicDiagnoser>(cfg.heuristic_threshold);
  if (cfg.diagnoser == "external") {
    require(!cfg.adapter_url.empty(), Errc::invalid_config,
            "diagnoser=external requires adapter_url or PROPGUARD_ADAPTER_URL");
    return std::make_unique<ExternalDiagnoser>(cfg.adapter_url, cfg.adapter_timeout_ms);
  }
  throw Error(Errc::invalid_config, "unknown diagnoser '" + cfg.diagnoser + "'");
}

SweepRow run_cell(const SweepConfig& cfg, const Cell& cell,
                  const scorer::ScorerParameters& scorer_params,
                  const std::optional<grpo::PolicyParameters>& policy_params) {
  auto started = std::chrono::steady_clock::now();

  CorpusSpec spec;
  spec.topologies = {sim::topology_kind_from(cell.topology)};
  spec.n_agents = cfg.n_agents;
  spec.edge_prob = cfg.edge_prob;
  spec.rounds = cfg.rounds;
  spec.count = cfg.episodes_per_cell;
  spec.families = {sim::attack_family_from(cell.attack)};
  spec.n_targets = cfg.n_targets;
  spec.strength_min = spec.strength_max = cfg.strength;
  spec.stealth_min = spec.stealth_max = cfg.stealth;
  spec.susceptibility_min = spec.susceptibility_max = cfg.susceptibility;
  spec.n_labels = cfg.n_labels;
  spec.alpha = cfg.alpha;
  spec.base_seed = cell.seed;
  std::vector<sim::EpisodeRecord> episodes = generate_episodes(spec);

  defense::DefenseConfig dcfg;
  dcfg.top_k = cell.top_k;
  dcfg.n_reveal = cfg.n_reveal;
  dcfg.budget = cfg.budget;
  dcfg.variant = cell.variant;

  SweepRow row;
  row.topology = cell.topology;
  row.attack = cell.attack;
  row.variant = cell.variant_label;
  row.seed_label = std::to_string(cell.seed);

  std::vector<sim::EpisodeRecord> after;
  after.reserve(episodes.size());
  double recall = 0, precision = 0, f1 = 0, accuracy = 0, asr = 0;
  for (const sim::EpisodeRecord& ep : episodes) {
    std::set<int> pred;
    if (cell.variant == defense::DefenseVariant::none) {
      after.push_back(ep);
    } else {
      auto policy = make_policy(cfg, policy_params);
      auto diagnoser = make_diagnoser(cfg, cell.seed);
      defense::DefenseOutcome outcome =
          defense::run_defense(ep, scorer_params, *policy, *diagnoser, dcfg);
      pred = outcome.harmful.sources;
      after.push_back(std::move(outcome.remediated));
    }
    asr += compute_asr(after.back());
    SourceMetrics sm =
        source_metrics(pred, true_sources(ep), cfg.n_agents * cfg.rounds);
    recall += sm.recall;
    precision += sm.precision;
    f1 += sm.f1;
    accuracy += sm.accuracy;
  }
  const double n = static_cast<double>(episodes.size());
  row.asr = asr / n;
  row.mdsr = compute_mdsr(after);
  row.src_recall = recall / n;
  row.src_precision = precision / n;
  row.src_f1 = f1 / n;
  row.src_accuracy = accuracy / n;
  row.runtime_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - started)
                       .count();
  return row;
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepConfig& cfg,
                                const scorer::ScorerParameters& scorer_params,
                                const std::optional<grpo::PolicyParameters>& policy_params) {
  require(!cfg.seeds.empty(), Errc::invalid_config, "sweep needs at least one seed");

  std::vector<Cell> cells;
  std::vector<int> ks = cfg.k_values.empty() ? std::vector<int>{cfg.top_k} : cfg.k_values;
  for (const std::string& topo : cfg.topologies)
    for (const std::string& atk : cfg.attacks)
      for (const std::string& variant : cfg.variants)
        for (int k : ks)
          for (uint64_t seed : cfg.seeds) {
            Cell c;
            c.topology = topo;
            c.attack = atk;
            c.variant_label =
                cfg.k_values.empty() ? variant : variant + "-k" + std::to_string(k);
            if (variant == "full")
              c.variant = defense::DefenseVariant::full;
            else if (variant == "prune")
              c.variant = defense::DefenseVariant::prune;
            else if (variant == "none")
              c.variant = defense::DefenseVariant::none;
            else
              throw Error(Errc::invalid_config, "unknown defense variant '" + variant + "'");
            c.top_k = k;
            c.seed = seed;
            cells.push_back(c);
          }

  std::vector<SweepRow> raw(cells.size());
  std::atomic<size_t> next{0};
  int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= cells.size() || failed.load()) break;
        try {
          raw[i] = run_cell(cfg, cells[i], scorer_params, policy_params);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!failed.exchange(true)) first_error = e.what();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  require(!failed.load(), Errc::io_error, "sweep cell failed: " + first_error);

  // Raw rows in cell order, then one aggregate row per (topology, attack,
  // variant) group in first-seen order.
  std::vector<SweepRow> rows = raw;
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<const SweepRow*>> groups;
  for (const SweepRow& r : raw) {
    std::string key = r.topology + "|" + r.attack + "|" + r.variant;
    if (!groups.count(key)) group_order.push_back(key);
    groups[key].push_back(&r);
  }
  for (const std::string& key : group_order) {
    const auto& members = groups[key];
    SweepRow agg = *members.front();
    agg.seed_label = "mean";
    agg.asr = agg.mdsr = agg.src_recall = agg.src_precision = agg.src_f1 = agg.src_accuracy = 0;
    agg.runtime_ms = 0;
    for (const SweepRow* r : members) {
      agg.asr += r->asr;
      agg.mdsr += r->mdsr;
      agg.src_recall += r->src_recall;
      agg.src_precision += r->src_precision;
      agg.src_f1 += r->src_f1;
      agg.src_accuracy += r->src_accuracy;
      agg.runtime_ms += r->runtime_ms;
    }
    double n = static_cast<double>(members.size());
    agg.asr /= n;
    agg.mdsr /= n;
    agg.src_recall /= n;
    agg.src_precision /= n;
    agg.src_f1 /= n;
    agg.src_accuracy /= n;
    rows.push_back(agg);
  }
  return rows;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "# propguard-sweep v1\n";
  out << "# accuracy denominator: all spatio-temporal nodes of the episode\n";
  out << "topology,attack,defense_variant,seed,asr,mdsr,src_recall,src_precision,src_f1,"
         "src_accuracy,runtime_ms\n";
  for (const SweepRow& r : rows) {
    out << r.topology << ',' << r.attack << ',' << r.variant << ',' << r.seed_label << ','
        << format_double(r.asr) << ',' << format_double(r.mdsr) << ','
        << format_double(r.src_recall) << ',' << format_double(r.src_precision) << ','
        << format_double(r.src_f1) << ',' << format_double(r.src_accuracy) << ','
        << r.runtime_ms << "\n";
  }
}

}  // namespace propguard::harness
