#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmilab/circuit.hpp"
#include "cmilab/ensemble.hpp"
#include "cmilab/oraclesim.hpp"

namespace cmilab {

enum class ProtocolKind { non_interactive_ka, two_round_ka, qpke_classical_keygen, qpke_quantum_pk, qpke_short_sk };
std::string to_string(ProtocolKind k);

// Classical part: names of records measured by the sender's output steps.
// Quantum part: a register detached from the sender and handed to the receiver.
struct MessageSpec {
  Labels records;
  std::string quantum_register;
  bool quantum() const { return !quantum_register.empty(); }
};

// Stages: alice_pre (A1 or Alice's query phase), bob_pre (B or Bob's query
// phase), alice_post (A2 or post-processing), bob_post (non-interactive
// post-processing; empty for two-round kinds). Each party's later stage
// extends its earlier layout.
struct ProtocolSpec {
  ProtocolKind kind = ProtocolKind::two_round_ka;
  std::string name;
  int n = 1;
  QueryCircuit alice_pre, bob_pre, alice_post, bob_post;
  MessageSpec m1, m2;
  std::string alice_key_register, bob_key_register;  // empty: no key
  // (input, output) register pairs of A1's classical queries: Alice's query record.
  std::vector<std::pair<std::string, std::string>> alice_record_registers;
  std::string secret_key_register;  // short-sk kinds
  std::size_t secret_key_values = 0;
  bool perfect_complete = false;
  nlohmann::ordered_json params;

  bool two_round() const { return kind != ProtocolKind::non_interactive_ka; }
  bool has_keys() const { return !alice_key_register.empty() && !bob_key_register.empty(); }
  int query_width() const { return n + 1; }
  nlohmann::ordered_json to_json() const;
};

// Built-ins: merkle, example1, example2, toy-qpke, toy-qpke-qct, pure-pk,
// clonable-pk, parity-ka, nonadaptive, stored-values-ka, short-sk.
ProtocolSpec make_protocol(const std::string& name, const nlohmann::json& params = nlohmann::json::object());
std::vector<std::string> builtin_protocols();

enum class Checkpoint { post_queries, post_m1, post_m2, final };
std::string to_string(Checkpoint c);
Checkpoint checkpoint_from_string(const std::string& s);

// One linear execution path of both parties for a fixed oracle. Vectors are
// unnormalised; the path probability is |alice|^2 |bob|^2.
struct JointBranch {
  ClassicalContext alice_records, bob_records, transcript;
  Vector alice, bob;
  std::map<std::string, Vector> in_flight;  // quantum messages not yet delivered
  double weight() const { return alice.squaredNorm() * bob.squaredNorm(); }
};

struct PartyLayouts {
  SystemLayout alice, bob;
};
PartyLayouts layouts_at(const ProtocolSpec& spec, Checkpoint c);

struct ExecuteOptions {
  bool measure_keys = true;  // at the final checkpoint
};

std::vector<JointBranch> execute_protocol(const ProtocolSpec& spec, const OracleFunction& h, Checkpoint c,
                                          const ExecuteOptions& opt = {});

struct OracleMode {
  enum Kind { purified, sampled } kind = purified;
  std::uint64_t seed = 0;
};

// Joint state at a checkpoint. Units "A" and "B" hold the parties' registers
// (plus "M:<register>" for quantum messages in flight); classical labels are
// "H" (oracle index), "A.<record>", "B.<record>", "pi.<record>".
struct ProtocolRun {
  Checkpoint checkpoint = Checkpoint::final;
  std::optional<OracleFunction> oracle;
  Ensemble state;
  PartyLayouts layouts;
  ClassicalContext transcript;  // sampled mode: one sampled transcript
  std::optional<std::int64_t> key_alice, key_bob;
};

ProtocolRun run_protocol(const ProtocolSpec& spec, OracleMode mode, Checkpoint c);

Ensemble branches_to_ensemble(const std::vector<JointBranch>& branches, const OracleFunction& h, double oracle_weight);

// Dense joint state over (A, B, H) with the function register kept coherent;
// requires every quantum message to be delivered.
DensityMatrix purified_joint_state(const ProtocolSpec& spec, Checkpoint c);

enum class AgreementMethod { exact_enumeration, purified_readout };
double agreement_probability(const ProtocolSpec& spec, AgreementMethod method);

// Distribution of a register after running a post stage with no queries on
// the given party state: used for key extraction from (possibly fake) views.
std::vector<double> key_distribution(const QueryCircuit& post, const SystemLayout& from, const Vector& state,
                                     const std::string& key_register, const OracleFunction& h,
                                     const ClassicalContext& ctx, const std::map<std::string, Vector>& fill = {});

// Runs a circuit directly on a purified oracle state (function register
// coherent). Context-dependent steps see `ctx`; classical coins and
// measurements dephase.
PurifiedOracleState run_purified_circuit(const QueryCircuit& c, PurifiedOracleState s, const ClassicalContext& ctx = {});

}  // namespace cmilab
