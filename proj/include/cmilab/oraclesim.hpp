#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cmilab/qmat.hpp"
#include "cmilab/rng.hpp"

namespace cmilab {

// Boolean random oracle H : {0,1}^n -> {0,1}, stored as a truth table.
class OracleFunction {
 public:
  OracleFunction() = default;
  OracleFunction(int n, std::vector<std::uint8_t> table);
  // Bit x of `index` is H(x); requires 2^n <= 64.
  static OracleFunction from_index(int n, std::uint64_t index);

  int n() const { return n_; }
  std::size_t domain_size() const { return table_.size(); }
  int operator()(std::uint64_t x) const;
  const std::vector<std::uint8_t>& table() const { return table_; }
  std::uint64_t index() const;

  // Truth table as hex; digit k holds H(4k..4k+3), least significant bit first.
  std::string hex() const;
  nlohmann::ordered_json to_json() const;
  static OracleFunction from_json(const nlohmann::json& j);

  bool operator==(const OracleFunction&) const = default;

 private:
  int n_ = 0;
  std::vector<std::uint8_t> table_;
};

OracleFunction sample_oracle(int n, std::uint64_t seed);
// Every oracle for n <= 3, in index order.
std::vector<OracleFunction> enumerate_oracles(int n);

// Classical (input, output) pairs observed by a party.
class QueryRecord {
 public:
  void add(std::uint64_t x, int value);  // ConflictError on a contradicting entry
  bool contains(std::uint64_t x) const { return entries_.count(x) > 0; }
  int value(std::uint64_t x) const;
  std::vector<std::uint64_t> inputs() const;
  const std::map<std::uint64_t, int>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool consistent_with(const OracleFunction& h) const;
  bool operator==(const QueryRecord&) const = default;

 private:
  std::map<std::uint64_t, int> entries_;
};

// Record values on the record's inputs, `h` elsewhere.
OracleFunction reprogram_oracle(const OracleFunction& h, const QueryRecord& record);

enum class QueryMode { phase, xor_out, classical };
std::string to_string(QueryMode m);
QueryMode query_mode_from_string(const std::string& s);

// Joint state of the algorithm registers and the function register, whose
// basis state |h> encodes the truth table with index h.
struct PurifiedOracleState {
  int n = 0;
  std::string function_label = "H";
  std::variant<PureState, DensityMatrix> state;

  const SystemLayout& layout() const;
  bool is_pure() const { return std::holds_alternative<PureState>(state); }
  DensityMatrix density() const;
};

// Algorithm registers start in |0>, the function register in the uniform
// superposition over all truth tables.
PurifiedOracleState init_purified_oracle(int n, const SystemLayout& registers, const std::string& function_label = "H");

PurifiedOracleState apply_query(const PurifiedOracleState& s, QueryMode mode, const std::string& input,
                                const std::string& output);
// Non-selective computational-basis measurement of one register.
PurifiedOracleState measure_register(const PurifiedOracleState& s, const std::string& label);
PurifiedOracleState apply_gate(const PurifiedOracleState& s, const Labels& targets, const Matrix& u);

// Mass of the function register, in the Fourier basis, at each Hamming weight.
std::map<int, double> fourier_support_weights(const PurifiedOracleState& s);
// Unnormalised algorithm-register vectors attached to each Fourier database D
// (pure states only): |psi> = sum_D |phi_D> |D^>.
std::map<std::uint64_t, Vector> fourier_components(const PurifiedOracleState& s);

// Normalised Walsh-Hadamard transform on a vector of length 2^k, in place.
void walsh_hadamard(Vector& v);

}  // namespace cmilab
