#pragma once

#include <set>
#include <span>
#include <vector>

#include "propguard/sim.hpp"

namespace propguard::harness {

// Fraction of agents whose final-round ground-truth compromised flag is set.
double compute_asr(const sim::EpisodeRecord& episode);

// Fraction of episodes whose final output equals the true label.
double compute_mdsr(std::span<const sim::EpisodeRecord> episodes);

struct SourceMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;  // denominator: all spatio-temporal nodes
};

SourceMetrics source_metrics(const std::set<int>& pred, const std::set<int>& truth,
                             int universe_size);

// Ground-truth attack origins: provenance nodes with no incoming provenance
// edge, as backbone node indices.
std::set<int> true_sources(const sim::EpisodeRecord& episode);

}  // namespace propguard::harness
