#include "cmilab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace cmilab {

void Ensemble::add(Branch b) {
  if (!(b.weight >= 0)) throw ValidationError("branch weight must be non-negative");
  for (auto& [name, unit] : b.units) {
    const double nrm = unit.state.norm();
    if (std::abs(nrm - 1) > 1e-8) throw ValidationError("unit '" + name + "' is not normalised");
  }
  if (!branches_.empty()) {
    const auto& f = branches_.front();
    bool same = f.units.size() == b.units.size() && f.classical.size() == b.classical.size();
    if (same)
      for (const auto& [k, v] : f.units) same = same && b.units.count(k);
    if (same)
      for (const auto& [k, v] : f.classical) same = same && b.classical.count(k);
    if (!same) throw ValidationError("branches of an ensemble must carry the same labels and units");
  }
  branches_.push_back(std::move(b));
}

double Ensemble::total_weight() const {
  double w = 0;
  for (const auto& b : branches_) w += b.weight;
  return w;
}

Labels Ensemble::unit_names() const {
  Labels out;
  if (!branches_.empty())
    for (const auto& [k, v] : branches_.front().units) out.push_back(k);
  return out;
}

Labels Ensemble::classical_names() const {
  Labels out;
  if (!branches_.empty())
    for (const auto& [k, v] : branches_.front().classical) out.push_back(k);
  return out;
}

bool Ensemble::has_unit(const std::string& name) const {
  return !branches_.empty() && branches_.front().units.count(name);
}

bool Ensemble::has_classical(const std::string& name) const {
  return !branches_.empty() && branches_.front().classical.count(name);
}

std::size_t Ensemble::classical_dim(const std::string& label) const {
  auto it = classical_dims_.find(label);
  if (it != classical_dims_.end()) return it->second;
  std::int64_t hi = 0;
  for (const auto& b : branches_) {
    const auto v = b.classical.at(label);
    if (v < 0) throw ValidationError("classical label '" + label + "' has a negative value and no declared dim");
    hi = std::max(hi, v);
  }
  return static_cast<std::size_t>(hi + 1);
}

// ---------------------------------------------------------------- index

namespace {

std::size_t hash_vector(const Vector& v) {
  std::size_t h = static_cast<std::size_t>(v.size()) * 0x9e3779b97f4a7c15ULL;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto re = static_cast<long long>(std::llround(v[i].real() * 1e7));
    const auto im = static_cast<long long>(std::llround(v[i].imag() * 1e7));
    h ^= std::hash<long long>{}(re) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= std::hash<long long>{}(im) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

constexpr std::size_t kMaxDistinctUnits = 4096;

}  // namespace

EnsembleIndex::EnsembleIndex(const Ensemble& ensemble) : ens_(&ensemble) {
  for (const auto& name : ensemble.unit_names()) {
    auto& ids = unit_ids_[name];
    auto& distinct = distinct_[name];
    std::unordered_map<std::size_t, std::vector<std::size_t>> buckets;
    for (const auto& b : ensemble.branches()) {
      const Vector& v = b.units.at(name).state;
      const auto h = hash_vector(v);
      auto& bucket = buckets[h];
      std::size_t id = distinct.size();
      for (auto cand : bucket)
        if (distinct[cand].size() == v.size() && (distinct[cand] - v).norm() < 1e-11) {
          id = cand;
          break;
        }
      if (id == distinct.size()) {
        if (distinct.size() >= kMaxDistinctUnits)
          throw CapError("unit '" + name + "' has more than " + std::to_string(kMaxDistinctUnits) + " distinct states");
        distinct.push_back(v);
        bucket.push_back(id);
      }
      ids.push_back(id);
    }
    const auto m = static_cast<Eigen::Index>(distinct.size());
    Matrix table(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = i; j < m; ++j) {
        table(i, j) = distinct[i].size() == distinct[j].size() ? distinct[i].dot(distinct[j]) : Complex(0);
        table(j, i) = std::conj(table(i, j));
      }
    overlaps_[name] = std::move(table);
  }
}

EnsembleIndex::Split EnsembleIndex::split(const Labels& group) const {
  Split s;
  std::set<std::string> seen;
  for (const auto& l : group) {
    if (!seen.insert(l).second) throw LayoutError("label '" + l + "' repeated in group");
    if (ens_->has_unit(l))
      s.units.push_back(l);
    else if (ens_->has_classical(l))
      s.classical.push_back(l);
    else
      throw LayoutError("ensemble has no item '" + l + "'");
  }
  return s;
}

std::size_t EnsembleIndex::copies_of(std::size_t branch, const std::string& unit, const CopyOverrides& overrides) const {
  auto it = overrides.find(unit);
  if (it != overrides.end()) return it->second;
  return ens_->branches()[branch].units.at(unit).copies;
}

std::vector<std::vector<std::size_t>> EnsembleIndex::blocks(const Labels& classical_labels) const {
  std::map<std::vector<std::int64_t>, std::vector<std::size_t>> parts;
  const auto& br = ens_->branches();
  for (std::size_t i = 0; i < br.size(); ++i) {
    std::vector<std::int64_t> key;
    key.reserve(classical_labels.size());
    for (const auto& l : classical_labels) {
      auto it = br[i].classical.find(l);
      if (it == br[i].classical.end()) throw LayoutError("ensemble has no classical label '" + l + "'");
      key.push_back(it->second);
    }
    parts[key].push_back(i);
  }
  std::vector<std::vector<std::size_t>> out;
  for (auto& [k, v] : parts) out.push_back(std::move(v));
  return out;
}

std::vector<std::int64_t> EnsembleIndex::signature(std::size_t branch, const Labels& group,
                                                   const CopyOverrides& overrides) const {
  const auto& b = ens_->branches()[branch];
  std::vector<std::int64_t> sig;
  for (const auto& l : group) {
    if (auto it = b.classical.find(l); it != b.classical.end()) {
      sig.push_back(it->second);
    } else {
      const auto c = copies_of(branch, l, overrides);
      sig.push_back(c == 0 ? -1 : static_cast<std::int64_t>(unit_ids_.at(l)[branch]));
      sig.push_back(static_cast<std::int64_t>(c));
    }
  }
  return sig;
}

Complex EnsembleIndex::overlap(std::size_t i, std::size_t j, const Labels& group, const CopyOverrides& overrides) const {
  const auto& bi = ens_->branches()[i];
  const auto& bj = ens_->branches()[j];
  Complex acc = 1;
  for (const auto& l : group) {
    if (auto it = bi.classical.find(l); it != bi.classical.end()) {
      if (it->second != bj.classical.at(l)) return 0;
      continue;
    }
    const auto ci = copies_of(i, l, overrides), cj = copies_of(j, l, overrides);
    if (ci != cj) return 0;
    if (ci == 0) continue;
    const Complex o = overlaps_.at(l)(unit_ids_.at(l)[i], unit_ids_.at(l)[j]);
    acc *= std::pow(o, static_cast<int>(ci));
    if (acc == Complex(0)) return 0;
  }
  return acc;
}

double EnsembleIndex::gram_entropy(const std::vector<std::size_t>& ids, const Labels& units,
                                   const CopyOverrides& overrides, double total) const {
  std::map<std::vector<std::int64_t>, std::pair<std::size_t, double>> merged;
  for (auto i : ids) {
    auto sig = signature(i, units, overrides);
    auto [it, fresh] = merged.try_emplace(std::move(sig), i, 0.0);
    it->second.second += ens_->branches()[i].weight;
  }
  std::vector<std::size_t> reps;
  std::vector<double> w;
  for (const auto& [sig, rep] : merged) {
    if (rep.second <= 0) continue;
    reps.push_back(rep.first);
    w.push_back(rep.second / total);
  }
  const auto m = static_cast<Eigen::Index>(reps.size());
  if (m == 0) return 0;
  if (m == 1) return w[0] > 0 ? -w[0] * std::log2(w[0]) : 0;
  Matrix g(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    g(a, a) = w[a];
    for (Eigen::Index b = a + 1; b < m; ++b) {
      g(a, b) = std::sqrt(w[a] * w[b]) * overlap(reps[a], reps[b], units, overrides);
      g(b, a) = std::conj(g(a, b));
    }
  }
  return spectrum_entropy(hermitian_eig(g).eigenvalues);
}

double EnsembleIndex::entropy(const Labels& group, const CopyOverrides& overrides) const {
  if (group.empty()) return 0;
  const auto s = split(group);
  const double total = ens_->total_weight();
  if (!(total > 0)) throw ValidationError("ensemble has zero total weight");
  double h = 0;
  for (const auto& part : blocks(s.classical)) {
    if (s.units.empty()) {
      double p = 0;
      for (auto i : part) p += ens_->branches()[i].weight;
      p /= total;
      if (p > 0) h -= p * std::log2(p);
    } else {
      h += gram_entropy(part, s.units, overrides, total);
    }
  }
  return h;
}

EntropyReport EnsembleIndex::cmi(const Labels& a, const Labels& b, const Labels& c, const CopyOverrides& overrides) const {
  if (a.empty() || b.empty()) throw ValidationError("mutual information needs non-empty A and B");
  auto cat = [](std::initializer_list<const Labels*> parts) {
    Labels out;
    for (auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
  };
  const double raw = entropy(cat({&a, &c}), overrides) + entropy(cat({&b, &c}), overrides) -
                     entropy(cat({&a, &b, &c}), overrides) - entropy(c, overrides);
  return clamp_information(raw);
}

GroupCompression EnsembleIndex::compress(const std::vector<std::size_t>& branch_ids, const Labels& group, bool expand,
                                         const CopyOverrides& overrides) const {
  split(group);
  std::map<std::vector<std::int64_t>, std::size_t> slot;
  std::vector<std::size_t> reps;
  std::vector<std::size_t> branch_slot;
  for (auto i : branch_ids) {
    auto sig = signature(i, group, overrides);
    auto [it, fresh] = slot.try_emplace(std::move(sig), reps.size());
    if (fresh) reps.push_back(i);
    branch_slot.push_back(it->second);
  }
  const auto m = static_cast<Eigen::Index>(reps.size());
  GroupCompression out;
  if (m == 0) return out;
  Matrix g(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = a; b < m; ++b) {
      g(a, b) = a == b ? Complex(1) : overlap(reps[a], reps[b], group, overrides);
      g(b, a) = std::conj(g(a, b));
    }
  const auto eig = hermitian_eig(g);
  const double top = eig.eigenvalues[0];
  Eigen::Index rank = 0;
  while (rank < m && eig.eigenvalues[rank] > 1e-11 * std::max(top, 1.0)) ++rank;
  out.rank = rank;
  std::vector<Vector> slot_coords(m, Vector(rank));
  for (Eigen::Index s = 0; s < m; ++s)
    for (Eigen::Index j = 0; j < rank; ++j)
      slot_coords[s][j] = std::sqrt(eig.eigenvalues[j]) * std::conj(eig.eigenvectors(s, j));
  for (auto s : branch_slot) out.coords.push_back(slot_coords[s]);

  if (expand) {
    std::vector<Factor> factors;
    for (const auto& l : group) {
      if (ens_->has_classical(l)) {
        factors.push_back({l, ens_->classical_dim(l)});
      } else {
        const auto c = copies_of(reps[0], l, overrides);
        std::size_t d = 1;
        const auto base = static_cast<std::size_t>(ens_->branches()[reps[0]].units.at(l).state.size());
        for (std::size_t k = 0; k < c; ++k) d *= base;
        factors.push_back({l, d});
      }
    }
    out.expanded_layout = SystemLayout(factors);
    const auto dim = static_cast<Eigen::Index>(out.expanded_layout.total_dim());
    out.basis = Matrix::Zero(dim, rank);
    for (Eigen::Index s = 0; s < m; ++s) {
      const auto& b = ens_->branches()[reps[s]];
      Vector phi = Vector::Ones(1);
      for (const auto& l : group) {
        if (auto it = b.classical.find(l); it != b.classical.end()) {
          phi = kron(phi, basis_vector(ens_->classical_dim(l), static_cast<std::size_t>(it->second)));
        } else {
          const auto c = copies_of(reps[s], l, overrides);
          for (std::size_t k = 0; k < c; ++k) phi = kron(phi, b.units.at(l).state);
        }
      }
      if (phi.size() != dim) throw LayoutError("inconsistent unit dimensions while expanding a group");
      for (Eigen::Index j = 0; j < rank; ++j)
        out.basis.col(j) += eig.eigenvectors(s, j) / std::sqrt(eig.eigenvalues[j]) * phi;
    }
  }
  return out;
}

EntropyReport ensemble_cmi(const Ensemble& ens, const Labels& a, const Labels& b, const Labels& c) {
  return EnsembleIndex(ens).cmi(a, b, c);
}

}  // namespace cmilab
