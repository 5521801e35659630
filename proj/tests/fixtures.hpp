// SPDX-License-Identifier: Apache-2.0
//
// Small synthetic corpora shared by the training, simulation and acceptance
// suites.

#pragma once

#include <cstdint>
#include <vector>

#include "drcf/rollout.hpp"
#include "drcf/synthetic.hpp"

namespace drcf::fixtures {

/// Stop-and-go scenarios with regime-law followers; one labelled series per
/// follower behind its predecessor.
inline std::vector<PairSeries> regime_corpus(int scenarios, int followers, std::uint64_t seed, double cruise_s = 10.0,
                                             double hold_s = 5.0) {
  std::vector<PairSeries> out;
  for (int i = 0; i < scenarios; ++i) {
    ScenarioConfig c;
    c.leader_v0 = 12.0 + 2.0 * (i % 4);
    c.schedule = stop_and_go_schedule(c.leader_v0, 1.0 + 0.25 * (i % 3), hold_s, cruise_s);
    c.follower_count = followers;
    c.law = FollowerLaw::kRegime;
    const auto data = generate_synthetic(c, seed + static_cast<std::uint64_t>(i));
    for (int k = 1; k <= followers; ++k) {
      const int lead = c.leader_id + k - 1, id = c.leader_id + k;
      const auto pair = make_pair(data.trajectories.at(lead), data.trajectories.at(id));
      out.push_back(make_series(pair, &data.truth.at(id)));
      out.back().follower_id = id + 100 * i;
      out.back().leader_id = lead + 100 * i;
    }
  }
  return out;
}

/// A short IDM pair behind a gently oscillating leader; nobody stops.
inline PairSeries cruising_pair(double seconds = 6.0) {
  ScenarioConfig c;
  c.leader_v0 = 15.0;
  c.schedule = {{seconds / 3, 0.5}, {seconds / 3, -0.5}, {seconds / 3, 0.3}};
  c.follower_count = 1;
  c.law = FollowerLaw::kIdm;
  const auto data = generate_synthetic(c, 1);
  const auto pair = make_pair(data.trajectories.at(1), data.trajectories.at(2));
  return make_series(pair, &data.truth.at(2));
}

}  // namespace drcf::fixtures
