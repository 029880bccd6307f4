#pragma once

#include <filesystem>
#include <vector>

#include "arac/policy.hpp"
#include "arac/rng.hpp"

namespace arac::archive {

using policy::NfPolicy;
using policy::PolicySnapshot;

// One stored policy with the fitness it earned when archived.
struct ArchiveEntry {
  PolicySnapshot snapshot;
  double fitness;
};

// 1-D Lloyd's clustering into a low and a high group, initialized at
// (min, max), run to an assignment fixpoint or 100 iterations. Ties go to the
// low cluster. All-identical inputs collapse both centroids onto the common
// value with every point in the low cluster.
struct TwoMeans {
  double centroid_lo = 0.0;
  double centroid_hi = 0.0;
  std::vector<int> assignment;  // 0 = low cluster, 1 = high cluster
};

TwoMeans two_means(const std::vector<double>& fitnesses);

// A policy offered to (or drawn from) the archive, paired with its fitness.
struct Candidate {
  const NfPolicy* pi = nullptr;
  double fitness = 0.0;
};

// Instrumentation record for one archive write during an update.
struct Replacement {
  std::size_t agent_index = 0;   // position in the population argument
  bool appended = false;         // below-capacity append
  std::size_t slot = 0;          // archive slot written
  int assigned_cluster = -1;     // 0 = low, 1 = high, -1 = append
  bool fallback_whole_archive = false;
};

// Bounded niched store of policy snapshots. Below capacity, updates append in
// population order; at capacity, one clustering pass per update partitions the
// stored fitnesses and each incoming agent replaces a uniformly drawn member
// of its nearest cluster (slot membership frozen for the whole update).
class Archive {
 public:
  explicit Archive(std::size_t capacity);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const ArchiveEntry& entry(std::size_t i) const;

  // Inserts the population (snapshot deep copies). Returns one record per
  // written agent. Fitness values must be finite.
  std::vector<Replacement> update(const std::vector<Candidate>& population, Rng& rng);

  // n uniform draws with replacement. An empty archive yields an empty list
  // (callers treat the repulsion term as a no-op). Pointers remain valid
  // until the next update.
  std::vector<Candidate> sample(std::size_t n, Rng& rng) const;

  // Directory persistence: one JSON blob per snapshot plus a manifest.
  void save(const std::filesystem::path& dir) const;
  static Archive load(const std::filesystem::path& dir);

 private:
  std::size_t capacity_;
  std::vector<ArchiveEntry> entries_;
};

}  // namespace arac::archive
