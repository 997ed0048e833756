#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmilab/qentropy.hpp"
#include "cmilab/qmat.hpp"

namespace cmilab {

// A classical-quantum ensemble: a weighted list of branches, each carrying
// classical labels and a product of pure "units". A unit may stand for
// several identical copies of the same pure state.
//
// Entropies of a group of items (classical labels and units) are computed
// from Gram matrices of the group's restricted branch vectors, so nothing of
// the size of the full joint space is ever formed.
struct Unit {
  Vector state;  // normalised
  std::size_t copies = 1;
};

struct Branch {
  double weight = 0;
  std::map<std::string, std::int64_t> classical;
  std::map<std::string, Unit> units;
};

class Ensemble {
 public:
  void add(Branch b);
  const std::vector<Branch>& branches() const { return branches_; }
  std::vector<Branch>& mutable_branches() { return branches_; }
  std::size_t size() const { return branches_.size(); }
  double total_weight() const;
  Labels unit_names() const;
  Labels classical_names() const;
  bool has_unit(const std::string& name) const;
  bool has_classical(const std::string& name) const;

  // Dimensions used when a classical label is expanded into a basis register.
  void set_classical_dim(const std::string& label, std::size_t dim) { classical_dims_[label] = dim; }
  std::size_t classical_dim(const std::string& label) const;

 private:
  std::vector<Branch> branches_;
  std::map<std::string, std::size_t> classical_dims_;
};

using CopyOverrides = std::map<std::string, std::size_t>;

// Coordinates of each branch's group vector in an orthonormal basis of the
// span of the group vectors (Gram factorisation).
struct GroupCompression {
  Eigen::Index rank = 0;
  std::vector<Vector> coords;  // one per requested branch
  Matrix basis;                // columns in the expanded group space, if requested
  SystemLayout expanded_layout;
};

class EnsembleIndex {
 public:
  explicit EnsembleIndex(const Ensemble& ensemble);

  const Ensemble& ensemble() const { return *ens_; }

  double entropy(const Labels& group, const CopyOverrides& overrides = {}) const;
  EntropyReport cmi(const Labels& a, const Labels& b, const Labels& c, const CopyOverrides& overrides = {}) const;

  // Branch indices grouped by the values of the given classical labels.
  std::vector<std::vector<std::size_t>> blocks(const Labels& classical_labels) const;

  GroupCompression compress(const std::vector<std::size_t>& branch_ids, const Labels& group, bool expand = false,
                            const CopyOverrides& overrides = {}) const;

  // Unnormalised overlap of two branches restricted to a group.
  Complex overlap(std::size_t i, std::size_t j, const Labels& group, const CopyOverrides& overrides = {}) const;

  // Canonical signature of a branch restricted to a group; equal signatures
  // mean identical restricted vectors.
  std::vector<std::int64_t> signature(std::size_t branch, const Labels& group,
                                      const CopyOverrides& overrides = {}) const;

 private:
  struct Split {
    Labels classical;
    Labels units;
  };
  Split split(const Labels& group) const;
  std::size_t copies_of(std::size_t branch, const std::string& unit, const CopyOverrides& overrides) const;
  double gram_entropy(const std::vector<std::size_t>& ids, const Labels& units, const CopyOverrides& overrides,
                      double total) const;

  const Ensemble* ens_;
  std::map<std::string, std::vector<std::size_t>> unit_ids_;  // unit -> per-branch id
  std::map<std::string, Matrix> overlaps_;                      // unit -> id x id table
  std::map<std::string, std::vector<Vector>> distinct_;         // unit -> distinct vectors
};

EntropyReport ensemble_cmi(const Ensemble& ens, const Labels& a, const Labels& b, const Labels& c);

}  // namespace cmilab
