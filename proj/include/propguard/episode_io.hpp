#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "propguard/defense.hpp"
#include "propguard/sim.hpp"

namespace propguard::harness {

// One JSON object per line; stable key order, exact double round-trip.
std::string episode_to_json(const sim::EpisodeRecord& episode);
sim::EpisodeRecord episode_from_json(const std::string& line);

void write_episodes_jsonl(const std::vector<sim::EpisodeRecord>& episodes, std::ostream& out);
std::vector<sim::EpisodeRecord> read_episodes_jsonl(std::istream& in);

std::string outcome_to_json(const defense::DefenseOutcome& outcome);
void write_outcomes_jsonl(const std::vector<defense::DefenseOutcome>& outcomes,
                          std::ostream& out);

}  // namespace propguard::harness
