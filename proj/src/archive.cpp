#include "arac/archive.hpp"

#include <cmath>
#include <fstream>

#include "arac/error.hpp"
#include "arac/logging.hpp"
#include "json.hpp"

namespace arac::archive {

TwoMeans two_means(const std::vector<double>& fitnesses) {
  const std::size_t n = fitnesses.size();
  if (n < 2) throw ContractViolation("two_means: need at least two values");

  TwoMeans r;
  r.centroid_lo = *std::min_element(fitnesses.begin(), fitnesses.end());
  r.centroid_hi = *std::max_element(fitnesses.begin(), fitnesses.end());
  r.assignment.assign(n, 0);

  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double dlo = std::fabs(fitnesses[i] - r.centroid_lo);
      const double dhi = std::fabs(fitnesses[i] - r.centroid_hi);
      const int a = dlo <= dhi ? 0 : 1;  // ties go low
      if (a != r.assignment[i]) {
        r.assignment[i] = a;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    double sum_lo = 0.0, sum_hi = 0.0;
    std::size_t n_lo = 0, n_hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (r.assignment[i] == 0) {
        sum_lo += fitnesses[i];
        n_lo += 1;
      } else {
        sum_hi += fitnesses[i];
        n_hi += 1;
      }
    }
    if (n_lo > 0) r.centroid_lo = sum_lo / static_cast<double>(n_lo);
    if (n_hi > 0) r.centroid_hi = sum_hi / static_cast<double>(n_hi);
    if (!changed) break;
  }
  if (r.centroid_lo > r.centroid_hi) {
    std::swap(r.centroid_lo, r.centroid_hi);
    for (int& a : r.assignment) a = 1 - a;
  }
  return r;
}

Archive::Archive(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractViolation("archive: capacity must be positive");
}

const ArchiveEntry& Archive::entry(std::size_t i) const {
  if (i >= entries_.size()) throw ContractViolation("archive: entry index out of range");
  return entries_[i];
}

std::vector<Replacement> Archive::update(const std::vector<Candidate>& population, Rng& rng) {
  if (population.empty()) throw ContractViolation("archive update: empty population");
  for (const Candidate& c : population) {
    if (c.pi == nullptr) throw ContractViolation("archive update: null policy");
    if (!std::isfinite(c.fitness)) throw ContractViolation("archive update: non-finite fitness");
  }

  std::vector<Replacement> events;
  std::size_t next = 0;

  // Below capacity: append in population order until full.
  while (next < population.size() && entries_.size() < capacity_) {
    Replacement ev;
    ev.agent_index = next;
    ev.appended = true;
    ev.slot = entries_.size();
    entries_.push_back({PolicySnapshot(*population[next].pi), population[next].fitness});
    events.push_back(ev);
    next += 1;
  }
  if (next == population.size()) return events;

  // At capacity: one clustering pass over the stored fitnesses, then each
  // remaining agent replaces a uniform member of its nearest cluster. Slot
  // membership is frozen for the whole update, so an agent written earlier in
  // the pass can itself be displaced by a later sibling.
  std::vector<double> fits;
  fits.reserve(entries_.size());
  for (const ArchiveEntry& e : entries_) fits.push_back(e.fitness);
  const TwoMeans km = two_means(fits);

  std::vector<std::size_t> lo_slots, hi_slots;
  for (std::size_t i = 0; i < km.assignment.size(); ++i)
    (km.assignment[i] == 0 ? lo_slots : hi_slots).push_back(i);

  for (; next < population.size(); ++next) {
    const Candidate& c = population[next];
    const double dlo = std::fabs(c.fitness - km.centroid_lo);
    const double dhi = std::fabs(c.fitness - km.centroid_hi);
    const int cluster = dlo <= dhi ? 0 : 1;  // ties go low
    const std::vector<std::size_t>& members = cluster == 0 ? lo_slots : hi_slots;

    Replacement ev;
    ev.agent_index = next;
    ev.assigned_cluster = cluster;
    if (members.empty()) {
      ev.fallback_whole_archive = true;
      ev.slot = rng.uniform_index(entries_.size());
      log::debug("archive: empty cluster %d, replacing a uniform entry", cluster);
    } else {
      ev.slot = members[rng.uniform_index(members.size())];
    }
    entries_[ev.slot] = {PolicySnapshot(*c.pi), c.fitness};
    events.push_back(ev);
  }
  return events;
}

std::vector<Candidate> Archive::sample(std::size_t n, Rng& rng) const {
  std::vector<Candidate> out;
  if (entries_.empty() || n == 0) return out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const ArchiveEntry& e = entries_[rng.uniform_index(entries_.size())];
    out.push_back({&e.snapshot.get(), e.fitness});
  }
  return out;
}

void Archive::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["kind"] = "policy_archive";
  manifest["capacity"] = capacity_;
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const std::string name = "entry_" + std::to_string(i) + ".json";
    std::ofstream blob(dir / name);
    if (!blob) throw DomainError("archive save: cannot open " + (dir / name).string());
    policy::save_policy(blob, entries_[i].snapshot.get());
    nlohmann::json item;
    item["id"] = i;
    item["fitness"] = entries_[i].fitness;
    item["file"] = name;
    list.push_back(item);
  }
  manifest["entries"] = list;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DomainError("archive save: cannot open manifest");
  out << manifest.dump(2) << "\n";
}

Archive Archive::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DomainError("archive load: cannot open manifest in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(in);
  if (manifest.value("kind", "") != "policy_archive")
    throw ContractViolation("archive load: unrecognized manifest kind");
  Archive a(manifest.at("capacity").get<std::size_t>());
  for (const nlohmann::json& item : manifest.at("entries")) {
    std::ifstream blob(dir / item.at("file").get<std::string>());
    if (!blob) throw DomainError("archive load: missing snapshot blob");
    NfPolicy p = policy::load_policy(blob);
    a.entries_.push_back({PolicySnapshot(p), item.at("fitness").get<double>()});
  }
  if (a.entries_.size() > a.capacity_)
    throw ContractViolation("archive load: more entries than capacity");
  return a;
}

}  // namespace arac::archive
