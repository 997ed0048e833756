#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "cmilab/oraclesim.hpp"
#include "cmilab/qmat.hpp"

namespace cmilab {

// Classical values visible to a party: received messages plus its own
// measurement records. Records whose name starts with '#' are bookkeeping
// (e.g. the collapsed input of a classical query).
using ClassicalContext = std::map<std::string, std::int64_t>;

struct GateStep {
  Labels targets;
  Matrix unitary;
};

// Basis permutation of the joint target index, possibly depending on the
// context. Must be a bijection; checked on application.
struct PermuteStep {
  Labels targets;
  std::function<std::uint64_t(std::uint64_t, const ClassicalContext&)> map;
};

// Unitary sending |0> of `target` to the returned state.
struct PrepareStep {
  std::string target;
  std::function<Vector(const ClassicalContext&)> state;
};

// Coin into `target` (which must start in |0>). A classical coin is measured
// and recorded; a coherent coin is left in superposition.
struct CoinStep {
  std::string target;
  std::vector<double> probs;
  std::string record;
  bool coherent = false;
};

struct QueryStep {
  QueryMode mode = QueryMode::phase;
  std::string input;
  std::string output;
};

struct MeasureStep {
  std::string target;
  std::string record;
};

using Step = std::variant<GateStep, PermuteStep, PrepareStep, CoinStep, QueryStep, MeasureStep>;

struct QueryCircuit {
  SystemLayout registers;
  std::vector<Step> steps;    // the party's work
  std::vector<Step> outputs;  // closing measurements (outgoing messages)

  int query_count() const;
  static int query_width(int n) { return n + 1; }
  bool all_queries_classical() const;
};

// Linear execution path: records fixed along the way and the unnormalised
// post-measurement vector. Its probability is the squared norm.
struct Path {
  ClassicalContext records;
  Vector amplitudes;
  double probability() const { return amplitudes.squaredNorm(); }
};

struct QueryEvent {
  int index;          // 0-based among the circuit's queries
  const QueryStep* step;
  const Path* path;   // state immediately before the query
};

struct ExecOptions {
  bool run_outputs = true;
  std::function<void(const QueryEvent&)> on_query;
  double drop_below = 1e-15;  // paths lighter than this are discarded
};

std::vector<Path> run_circuit(const QueryCircuit& c, const OracleFunction& h, const ClassicalContext& inputs,
                              std::vector<Path> initial, const ExecOptions& opt = {});
std::vector<Path> run_circuit(const QueryCircuit& c, const OracleFunction& h, const ClassicalContext& inputs,
                              const Vector& initial, const ExecOptions& opt = {});

Vector zero_state(const SystemLayout& layout);

// Place `psi` (on `from`) into the larger layout `to`; factors of `to` missing
// from `from` start in |0> unless given in `fill`.
Vector embed_state(const Vector& psi, const SystemLayout& from, const SystemLayout& to,
                   const std::map<std::string, Vector>& fill = {});

// Split a product state into the factor `label` and the rest (remaining
// factors keep their order). Throws ModeError when the factor is entangled.
std::pair<Vector, Vector> split_factor(const Vector& psi, const SystemLayout& layout, const std::string& label);

// Marginal distribution of one register.
std::vector<double> register_distribution(const Vector& psi, const SystemLayout& layout, const std::string& label);

// Helpers for protocol authoring.
PermuteStep xor_into(const std::string& target, const Labels& sources,
                     std::function<std::uint64_t(const std::vector<std::uint64_t>&, const ClassicalContext&)> f,
                     const SystemLayout& layout);
PrepareStep prepare_fixed(const std::string& target, Vector state);
PrepareStep load_value(const std::string& target, std::size_t dim,
                       std::function<std::uint64_t(const ClassicalContext&)> value);

}  // namespace cmilab
