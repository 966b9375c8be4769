// Command-line front end: simulate episodes, train the risk scorer and the
// inspector policy, run the defense pipeline, sweep experiment grids, and
// report metrics. All commands are deterministic in --seed.
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "propguard/adapter.hpp"
#include "propguard/config.hpp"
#include "propguard/corpus.hpp"
#include "propguard/defense.hpp"
#include "propguard/episode_io.hpp"
#include "propguard/inspector.hpp"
#include "propguard/metrics.hpp"
#include "propguard/sweep.hpp"

namespace fs = std::filesystem;
using namespace propguard;

namespace {

harness::Config load_config(const std::string& path) {
  if (path.empty()) return harness::Config{};
  return harness::Config::parse_file(path);
}

harness::CorpusSpec corpus_from_config(const harness::Config& cfg, uint64_t seed) {
  harness::CorpusSpec spec;
  spec.topologies.clear();
  auto topo_names = cfg.get_list("topologies");
  if (topo_names.empty()) topo_names = {cfg.get_string("topology", "random")};
  for (const std::string& t : topo_names) spec.topologies.push_back(sim::topology_kind_from(t));
  spec.n_agents = cfg.get_int("n_agents", spec.n_agents);
  spec.edge_prob = cfg.get_double("edge_prob", spec.edge_prob);
  spec.rounds = cfg.get_int("rounds", spec.rounds);
  spec.count = cfg.get_int("count", spec.count);
  std::string attack = cfg.get_string("attack", "mixed");
  if (attack == "none") {
    spec.benign = true;
  } else if (attack != "mixed") {
    spec.families = {sim::attack_family_from(attack)};
  }
  spec.n_targets = cfg.get_int("attack_targets", spec.n_targets);
  spec.strength_min = cfg.get_double("attack_strength_min", spec.strength_min);
  spec.strength_max = cfg.get_double("attack_strength_max", spec.strength_max);
  if (cfg.has("attack_strength"))
    spec.strength_min = spec.strength_max = cfg.get_double("attack_strength", 0.9);
  spec.stealth_min = cfg.get_double("attack_stealth_min", spec.stealth_min);
  spec.stealth_max = cfg.get_double("attack_stealth_max", spec.stealth_max);
  if (cfg.has("attack_stealth"))
    spec.stealth_min = spec.stealth_max = cfg.get_double("attack_stealth", 0.2);
  spec.susceptibility_min = cfg.get_double("attack_susceptibility_min", spec.susceptibility_min);
  spec.susceptibility_max = cfg.get_double("attack_susceptibility_max", spec.susceptibility_max);
  if (cfg.has("attack_susceptibility"))
    spec.susceptibility_min = spec.susceptibility_max =
        cfg.get_double("attack_susceptibility", 0.8);
  spec.n_labels = cfg.get_int("n_labels", spec.n_labels);
  spec.alpha = cfg.get_double("alpha", spec.alpha);
  spec.base_seed = seed;
  return spec;
}

std::vector<sim::EpisodeRecord> episodes_from(const std::string& episodes_path,
                                              const harness::Config& cfg, uint64_t seed) {
  if (!episodes_path.empty()) {
    std::ifstream in(episodes_path);
    require(in.good(), Errc::io_error, "cannot open episodes file " + episodes_path);
    return harness::read_episodes_jsonl(in);
  }
  return harness::generate_episodes(corpus_from_config(cfg, seed));
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write " + path.string());
  writer(out);
  std::cout << "wrote " << path.string() << "\n";
}

scorer::ScorerParameters load_scorer(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot open scorer checkpoint " + path);
  return scorer::load_scorer_checkpoint(in);
}

struct DefenseSetup {
  std::unique_ptr<explore::ExplorationPolicy> policy;
  std::unique_ptr<defense::Diagnoser> diagnoser;
};

DefenseSetup make_setup(const std::string& policy_name, const std::string& policy_ckpt,
                        const std::string& diagnoser_name, double eta, double threshold,
                        uint64_t seed) {
  DefenseSetup setup;
  if (policy_name == "trained") {
    std::ifstream in(policy_ckpt);
    require(in.good(), Errc::io_error, "cannot open inspector checkpoint " + policy_ckpt);
    setup.policy = std::make_unique<grpo::LearnedPolicy>(grpo::load_policy_checkpoint(in));
  } else if (policy_name == "greedy") {
    setup.policy = explore::heuristic_policy(explore::Heuristic::greedy);
  } else if (policy_name == "bfs") {
    setup.policy = explore::heuristic_policy(explore::Heuristic::bfs);
  } else if (policy_name == "random") {
    setup.policy = explore::heuristic_policy(explore::Heuristic::random);
  } else {
    throw Error(Errc::invalid_config, "unknown policy '" + policy_name + "'");
  }

  if (diagnoser_name == "oracle") {
    setup.diagnoser = std::make_unique<defense::OracleDiagnoser>(eta, seed);
  } else if (diagnoser_name == "heuristic") {
    setup.diagnoser = std::make_unique<defense::HeuristicDiagnoser>(threshold);
  } else if (diagnoser_name == "external") {
    std::string url = harness::adapter_url_from_env();
    require(!url.empty(), Errc::invalid_config,
            "diagnoser=external needs PROPGUARD_ADAPTER_URL");
    setup.diagnoser = std::make_unique<harness::ExternalDiagnoser>(url, 2000);
  } else {
    throw Error(Errc::invalid_config, "unknown diagnoser '" + diagnoser_name + "'");
  }
  return setup;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PropGuard: propagation-aware defense simulator for multi-agent systems"};
  app.require_subcommand(1);
  app.fallthrough();  // let --config/--seed/--out follow the subcommand

  std::string config_path, out_dir = ".";
  uint64_t seed = 0;
  app.add_option("--config", config_path, "flat key=value config file");
  app.add_option("--seed", seed, "base RNG seed");
  app.add_option("--out", out_dir, "output directory");

  auto* simulate = app.add_subcommand("simulate", "generate an episode corpus as JSONL");

  auto* train_scorer = app.add_subcommand("train-scorer", "pretrain + finetune the risk scorer");
  std::string ts_episodes;
  train_scorer->add_option("--episodes", ts_episodes, "existing episodes JSONL (else generated)");

  auto* train_inspector =
      app.add_subcommand("train-inspector", "GE-GRPO training of the inspector policy");
  std::string ti_scorer, ti_episodes;
  train_inspector->add_option("--scorer", ti_scorer, "scorer checkpoint")->required();
  train_inspector->add_option("--episodes", ti_episodes, "existing episodes JSONL");

  auto* defend = app.add_subcommand("defend", "run the defense pipeline over episodes");
  std::string df_episodes, df_scorer, df_policy = "greedy", df_policy_ckpt,
              df_diagnoser = "heuristic", df_variant = "full";
  defend->add_option("--episodes", df_episodes, "episodes JSONL")->required();
  defend->add_option("--scorer", df_scorer, "scorer checkpoint")->required();
  defend->add_option("--policy", df_policy, "trained|greedy|bfs|random");
  defend->add_option("--policy-ckpt", df_policy_ckpt, "inspector checkpoint for --policy trained");
  defend->add_option("--diagnoser", df_diagnoser, "oracle|heuristic|external");
  defend->add_option("--variant", df_variant, "full|prune|none");

  auto* sweep = app.add_subcommand("sweep", "run an experiment grid and emit CSV");
  std::string sw_scorer, sw_policy_ckpt;
  sweep->add_option("--scorer", sw_scorer, "scorer checkpoint");
  sweep->add_option("--policy-ckpt", sw_policy_ckpt, "inspector checkpoint");

  auto* metrics = app.add_subcommand("metrics", "compute ASR/MDSR for an episode file");
  std::string mt_episodes;
  metrics->add_option("--episodes", mt_episodes, "episodes JSONL")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    harness::Config cfg = load_config(config_path);
    fs::path out(out_dir);

    if (*simulate) {
      std::vector<sim::EpisodeRecord> eps =
          harness::generate_episodes(corpus_from_config(cfg, seed));
      write_file(out / "episodes.jsonl",
                 [&](std::ostream& o) { harness::write_episodes_jsonl(eps, o); });
      double asr = 0;
      for (const auto& ep : eps) asr += harness::compute_asr(ep);
      std::cout << "episodes " << eps.size() << "  mean ASR " << asr / eps.size() << "  MDSR "
                << harness::compute_mdsr(eps) << "\n";
    }

    if (*train_scorer) {
      std::vector<sim::EpisodeRecord> eps = episodes_from(ts_episodes, cfg, seed);
      graph::FeatureConfig fcfg;
      fcfg.d_r = cfg.get_int("d_r", fcfg.d_r);
      fcfg.d_s = cfg.get_int("d_s", fcfg.d_s);
      fcfg.noise = cfg.get_double("feature_noise", fcfg.noise);

      std::vector<graph::STGraph> graphs;
      graphs.reserve(eps.size());
      for (const auto& ep : eps) graphs.push_back(graph::build_backbone(ep, fcfg));

      scorer::ScorerConfig scfg;
      scfg.lr = cfg.get_double("scorer_lr", scfg.lr);
      scfg.pretrain_steps = cfg.get_int("pretrain_steps", scfg.pretrain_steps);
      scfg.finetune_steps = cfg.get_int("finetune_steps", scfg.finetune_steps);
      scfg.corruption_rate = cfg.get_double("corruption_rate", scfg.corruption_rate);
      scfg.lambda_nc = cfg.get_double("lambda_nc", scfg.lambda_nc);
      scfg.rng_seed = seed;

      int h = cfg.get_int("hidden_dim", 16);
      scorer::ScorerParameters params =
          scorer::ScorerParameters::random_init(fcfg.d_r, h, derive_seed(seed, 1), 0.1);
      params = scorer::pretrain_selfsupervised(params, graphs, scfg);

      std::vector<scorer::LabeledGraph> labeled;
      for (size_t i = 0; i < graphs.size(); ++i) {
        if (eps[i].provenance.nodes.empty()) continue;
        labeled.push_back({&graphs[i], graph::provenance_node_indices(eps[i].provenance,
                                                                      eps[i].topology.n_agents)});
      }
      std::vector<double> trace;
      params = scorer::finetune_supervised(params, labeled, scfg, &trace);
      write_file(out / "scorer.ckpt",
                 [&](std::ostream& o) { scorer::save_checkpoint(params, o); });
      if (!trace.empty())
        std::cout << "finetune loss " << trace.front() << " -> " << trace.back() << "\n";
    }

    if (*train_inspector) {
      std::vector<sim::EpisodeRecord> eps = episodes_from(ti_episodes, cfg, seed);
      scorer::ScorerParameters sp = load_scorer(ti_scorer);
      graph::FeatureConfig fcfg;
      fcfg.d_r = sp.d_r;
      fcfg.d_s = cfg.get_int("d_s", 36);
      fcfg.noise = cfg.get_double("feature_noise", 0.05);

      std::vector<graph::STGraph> graphs;
      std::vector<const sim::EpisodeRecord*> ptrs;
      for (const auto& ep : eps) {
        require(!ep.provenance.nodes.empty(), Errc::invalid_input,
                "inspector training requires attack episodes");
        graphs.push_back(graph::build_backbone(ep, fcfg));
      }
      for (const auto& ep : eps) ptrs.push_back(&ep);

      grpo::TrainConfig tcfg;
      tcfg.group_size = cfg.get_int("group_size", tcfg.group_size);
      tcfg.lr = cfg.get_double("inspector_lr", tcfg.lr);
      tcfg.steps = cfg.get_int("train_steps", tcfg.steps);
      tcfg.eps_clip = cfg.get_double("eps_clip", tcfg.eps_clip);
      tcfg.beta_kl = cfg.get_double("beta_kl", tcfg.beta_kl);
      tcfg.top_k = cfg.get_int("K", tcfg.top_k);
      tcfg.n_reveal = cfg.get_int("n_reveal", tcfg.n_reveal);
      tcfg.budget = cfg.get_int("budget", tcfg.budget);
      tcfg.rng_seed = seed;
      grpo::RewardConfig rcfg;
      rcfg.lambda_f1 = cfg.get_double("lambda_f1", rcfg.lambda_f1);
      rcfg.lambda_prior = cfg.get_double("lambda_prior", rcfg.lambda_prior);
      rcfg.gamma = cfg.get_double("gamma", rcfg.gamma);

      std::vector<grpo::TrainEnv> envs = grpo::make_train_envs(graphs, ptrs, sp, tcfg.top_k);
      std::vector<double> rewards;
      grpo::PolicyParameters policy = grpo::train_inspector(envs, tcfg, rcfg, &rewards);
      write_file(out / "inspector.ckpt",
                 [&](std::ostream& o) { grpo::save_checkpoint(policy, o); });
      if (rewards.size() >= 20) {
        double head = 0, tail = 0;
        for (int i = 0; i < 10; ++i) head += rewards[i];
        for (size_t i = rewards.size() - 10; i < rewards.size(); ++i) tail += rewards[i];
        std::cout << "mean group reward " << head / 10 << " -> " << tail / 10 << "\n";
      }
    }

    if (*defend) {
      std::vector<sim::EpisodeRecord> eps = episodes_from(df_episodes, cfg, seed);
      scorer::ScorerParameters sp = load_scorer(df_scorer);
      defense::DefenseConfig dcfg;
      dcfg.top_k = cfg.get_int("K", dcfg.top_k);
      dcfg.n_reveal = cfg.get_int("n_reveal", dcfg.n_reveal);
      dcfg.budget = cfg.get_int("budget", dcfg.budget);
      dcfg.features.d_r = sp.d_r;
      dcfg.features.d_s = cfg.get_int("d_s", 36);
      if (df_variant == "full")
        dcfg.variant = defense::DefenseVariant::full;
      else if (df_variant == "prune")
        dcfg.variant = defense::DefenseVariant::prune;
      else if (df_variant == "none")
        dcfg.variant = defense::DefenseVariant::none;
      else
        throw Error(Errc::invalid_config, "unknown variant '" + df_variant + "'");

      DefenseSetup setup = make_setup(df_policy, df_policy_ckpt, df_diagnoser,
                                      cfg.get_double("oracle_eta", 0.0),
                                      cfg.get_double("heuristic_threshold", 0.15), seed);

      std::vector<defense::DefenseOutcome> outcomes;
      std::vector<sim::EpisodeRecord> after;
      double asr_before = 0, asr_after = 0, recall = 0;
      for (const auto& ep : eps) {
        outcomes.push_back(defense::run_defense(ep, sp, *setup.policy, *setup.diagnoser, dcfg));
        const auto& oc = outcomes.back();
        asr_before += harness::compute_asr(ep);
        asr_after += harness::compute_asr(oc.remediated);
        recall += harness::source_metrics(oc.harmful.sources, harness::true_sources(ep),
                                          ep.topology.n_agents * ep.rounds)
                      .recall;
        after.push_back(oc.remediated);
      }
      write_file(out / "outcomes.jsonl",
                 [&](std::ostream& o) { harness::write_outcomes_jsonl(outcomes, o); });
      write_file(out / "remediated.jsonl",
                 [&](std::ostream& o) { harness::write_episodes_jsonl(after, o); });
      double n = static_cast<double>(eps.size());
      std::cout << "ASR " << asr_before / n << " -> " << asr_after / n << "  MDSR "
                << harness::compute_mdsr(eps) << " -> " << harness::compute_mdsr(after)
                << "  source recall " << recall / n << "\n";
    }

    if (*sweep) {
      harness::SweepConfig sc = harness::SweepConfig::from(cfg);
      scorer::ScorerParameters sp =
          sw_scorer.empty()
              ? scorer::ScorerParameters::random_init(24, 16, derive_seed(seed, 2), 0.1)
              : load_scorer(sw_scorer);
      std::optional<grpo::PolicyParameters> pp;
      if (!sw_policy_ckpt.empty()) {
        std::ifstream in(sw_policy_ckpt);
        require(in.good(), Errc::io_error, "cannot open inspector checkpoint " + sw_policy_ckpt);
        pp = grpo::load_policy_checkpoint(in);
      }
      std::vector<harness::SweepRow> rows = harness::run_sweep(sc, sp, pp);
      fs::path csv = sc.out_csv.empty() ? out / "sweep.csv" : fs::path(sc.out_csv);
      write_file(csv, [&](std::ostream& o) { harness::write_sweep_csv(rows, o); });
    }

    if (*metrics) {
      std::ifstream in(mt_episodes);
      require(in.good(), Errc::io_error, "cannot open episodes file " + mt_episodes);
      std::vector<sim::EpisodeRecord> eps = harness::read_episodes_jsonl(in);
      require(!eps.empty(), Errc::invalid_input, "no episodes in " + mt_episodes);
      double asr = 0;
      for (const auto& ep : eps) asr += harness::compute_asr(ep);
      std::cout << "episodes " << eps.size() << "\n";
      std::cout << "mean ASR " << asr / eps.size() << "\n";
      std::cout << "MDSR " << harness::compute_mdsr(eps) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
