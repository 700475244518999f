#pragma once

// CSV outputs shared by the detector and the baselines.

#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "breachradar/baselines.hpp"
#include "breachradar/detector.hpp"
#include "breachradar/engine.hpp"
#include "breachradar/graph.hpp"
#include "breachradar/graph_io.hpp"

namespace breachradar {

namespace detail {
inline std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

// location_key,theta,z,n_neighbors,n_fraud_neighbors in ranking order. The
// theta column carries the ranker's score; z is empty for rankers without
// blame sums.
inline void write_locations_csv(std::ostream& out, const BipartiteGraph& g, const RankedLocations& ranking,
                                const std::vector<double>* blame_sums = nullptr) {
  out << "location_key,theta,z,n_neighbors,n_fraud_neighbors\n";
  for (const auto& e : ranking.entries) {
    out << csv_escape(g.location(e.location).key()) << ',' << detail::fmt_real(e.score) << ',';
    if (blame_sums) out << detail::fmt_real((*blame_sums)[e.location]);
    out << ',' << g.degree_of_location(e.location) << ',' << g.fraud_neighbors(e.location) << '\n';
  }
}

// card_id,location_key,blame for fraud-card edges with blame >= min_blame.
inline void write_blames_csv(std::ostream& out, const BipartiteGraph& g, const BlameMatrix& blames,
                             double min_blame = 0.0) {
  out << "card_id,location_key,blame\n";
  for (BipartiteGraph::Index i = 0; i < g.num_cards(); ++i) {
    const auto row = blames.row(i);
    const auto locs = g.locations_of(i);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] < min_blame) continue;
      out << csv_escape(g.card_id(i)) << ',' << csv_escape(g.location(locs[k]).key()) << ','
          << detail::fmt_real(row[k]) << '\n';
    }
  }
}

inline void write_timing_csv(std::ostream& out, const std::vector<SuperstepTiming>& rows, bool header = true) {
  if (header) out << "iteration,superstep,worker_count,millis\n";
  for (const auto& r : rows)
    out << r.iteration << ',' << r.superstep << ',' << r.worker_count << ',' << detail::fmt_real(r.millis) << '\n';
}

// Reads a locations CSV back into a ranking over `g`'s locations. Every
// location of the graph must appear exactly once.
inline RankedLocations read_locations_csv(std::istream& in, const BipartiteGraph& g) {
  std::unordered_map<LocationBucket, BipartiteGraph::Index, LocationBucketHash> index;
  for (BipartiteGraph::Index j = 0; j < g.num_locations(); ++j) index.emplace(g.location(j), j);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty locations CSV");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "location_key" || header[1] != "theta")
    throw DataError("locations CSV must start with location_key,theta");
  std::vector<double> scores(g.num_locations());
  std::vector<std::uint8_t> seen(g.num_locations(), 0);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw DataError("line " + std::to_string(lineno) + ": wrong column count");
    const auto it = index.find(LocationBucket::parse(f[0]));
    if (it == index.end()) throw DataError("line " + std::to_string(lineno) + ": unknown location " + f[0]);
    if (seen[it->second]++) throw DataError("line " + std::to_string(lineno) + ": duplicate location " + f[0]);
    try {
      scores[it->second] = std::stod(f[1]);
    } catch (const std::exception&) {
      throw DataError("line " + std::to_string(lineno) + ": bad score '" + f[1] + "'");
    }
  }
  for (auto s : seen)
    if (!s) throw DataError("locations CSV does not cover every candidate location");
  return RankedLocations::from_scores(scores);
}

}  // namespace breachradar
