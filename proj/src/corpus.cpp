#include "propguard/corpus.hpp"

#include "propguard/error.hpp"
#include "propguard/rng.hpp"

namespace propguard::harness {

std::vector<sim::EpisodeRecord> generate_episodes(const CorpusSpec& spec) {
  require(spec.count >= 1, Errc::invalid_config, "corpus count must be >= 1");
  require(!spec.topologies.empty(), Errc::invalid_config, "corpus needs at least one topology");
  require(spec.benign || !spec.families.empty(), Errc::invalid_config,
          "attack corpus needs at least one family");
  require(spec.n_targets >= 1 && spec.n_targets < spec.n_agents, Errc::invalid_config,
          "n_targets must be in [1, n_agents)");

  std::vector<sim::EpisodeRecord> out;
  out.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) {
    Rng rng(derive_seed(spec.base_seed, 0xC0FFEEull + i));
    sim::TopologyKind kind = spec.topologies[i % spec.topologies.size()];
    uint64_t topo_seed = rng.next_u64();
    sim::Topology topo = sim::build_topology(kind, spec.n_agents, spec.edge_prob, topo_seed);

    sim::Task task;
    task.task_id = "task-" + std::to_string(i);
    task.n_labels = spec.n_labels;
    task.true_label = static_cast<int>(rng.next_below(static_cast<uint32_t>(spec.n_labels)));
    int adv = static_cast<int>(rng.next_below(static_cast<uint32_t>(spec.n_labels - 1)));
    task.adversarial_label = adv >= task.true_label ? adv + 1 : adv;

    std::optional<sim::AttackSpec> attack;
    if (!spec.benign) {
      sim::AttackSpec atk;
      atk.family = spec.families[i % spec.families.size()];
      int want = spec.n_targets;
      if (spec.n_targets_max > spec.n_targets)
        want += static_cast<int>(
            rng.next_below(static_cast<uint32_t>(spec.n_targets_max - spec.n_targets + 1)));
      while (static_cast<int>(atk.targets.size()) < want)
        atk.targets.insert(static_cast<int>(rng.next_below(static_cast<uint32_t>(spec.n_agents))));
      atk.strength =
          spec.strength_min + rng.next_unit() * (spec.strength_max - spec.strength_min);
      atk.stealth = spec.stealth_min + rng.next_unit() * (spec.stealth_max - spec.stealth_min);
      atk.susceptibility = spec.susceptibility_min +
                           rng.next_unit() * (spec.susceptibility_max - spec.susceptibility_min);
      attack = atk;
    }

    uint64_t episode_seed = rng.next_u64();
    out.push_back(sim::run_episode(topo, task, attack, spec.rounds, episode_seed, spec.alpha));
  }
  return out;
}

}  // namespace propguard::harness
