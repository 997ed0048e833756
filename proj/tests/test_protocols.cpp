#include <doctest.h>

#include <cmath>

#include "cmilab/errors.hpp"
#include "cmilab/protocols.hpp"
#include "support/checks.hpp"

using namespace cmilab;
using namespace testing_support;

namespace {

// Pr[k_A = k_B] read off the diagonal of the dense purified joint state.
double agreement_from_diagonal(const ProtocolSpec& spec) {
  const auto rho = purified_joint_state(spec, Checkpoint::final);
  const auto keys = partial_trace(rho, {"A." + spec.alice_key_register, "B." + spec.bob_key_register});
  const auto da = keys.layout()[0].dim, db = keys.layout()[1].dim;
  double p = 0;
  for (std::size_t k = 0; k < std::min(da, db); ++k) {
    const auto i = static_cast<Eigen::Index>(k * db + k);
    p += keys.matrix()(i, i).real();
  }
  return p;
}

// Merkle with d-subsets of 2^n points agrees exactly when the subsets meet.
double merkle_agreement_oracle(std::size_t N, std::size_t d) {
  std::vector<unsigned> sets;
  for (unsigned m = 0; m < (1u << N); ++m)
    if (static_cast<std::size_t>(std::popcount(m)) == d) sets.push_back(m);
  double meet = 0;
  for (auto a : sets)
    for (auto b : sets) meet += (a & b) != 0;
  return meet / static_cast<double>(sets.size() * sets.size());
}

bool dense_feasible(const ProtocolSpec& spec, Checkpoint c) {
  const auto l = layouts_at(spec, c);
  return l.alice.total_dim() * l.bob.total_dim() * (std::size_t{1} << (std::size_t{1} << spec.n)) <= 2048;
}

Matrix reduced_protocol_state_by_sampling(const ProtocolSpec& spec, Checkpoint c) {
  const auto oracles = enumerate_oracles(spec.n);
  Matrix rho;
  for (const auto& h : oracles)
    for (const auto& jb : execute_protocol(spec, h, c)) {
      const Vector v = kron(jb.alice, jb.bob);
      if (rho.size() == 0) rho = Matrix::Zero(v.size(), v.size());
      rho += v * v.adjoint() / static_cast<double>(oracles.size());
    }
  return rho;
}

}  // namespace

TEST_CASE("merkle parameters and agreement") {
  const auto m = make_protocol("merkle", {{"n", 2}, {"d", 2}});
  CHECK(m.params == nlohmann::ordered_json{{"n", 2}, {"d", 2}});
  CHECK(m.alice_pre.query_count() == 2);
  CHECK(m.bob_pre.query_count() == 2);
  CHECK_FALSE(m.two_round());
  CHECK_FALSE(m.perfect_complete);

  const double expected = merkle_agreement_oracle(4, 2);
  CHECK(expected == doctest::Approx(5.0 / 6).epsilon(1e-15));
  CHECK(agreement_probability(m, AgreementMethod::exact_enumeration) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(agreement_probability(m, AgreementMethod::purified_readout) == doctest::Approx(expected).epsilon(1e-12));

  const auto full = make_protocol("merkle", {{"n", 2}, {"d", 4}});
  CHECK(full.perfect_complete);
  CHECK(agreement_probability(full, AgreementMethod::exact_enumeration) == doctest::Approx(1).epsilon(1e-12));
  CHECK(agreement_probability(full, AgreementMethod::purified_readout) == doctest::Approx(1).epsilon(1e-12));

  const auto run = run_protocol(m, OracleMode{}, Checkpoint::post_queries);
  CHECK(run.state.classical_dim("H") == 16);
  CHECK(run.state.total_weight() == doctest::Approx(1).epsilon(1e-12));
}

TEST_CASE("agreement methods coincide on every built-in with keys") {
  for (const auto& name : builtin_protocols()) {
    const auto spec = make_protocol(name);
    if (!spec.has_keys()) continue;
    CAPTURE(name);
    const double exact = agreement_probability(spec, AgreementMethod::exact_enumeration);
    CHECK(std::abs(exact - agreement_probability(spec, AgreementMethod::purified_readout)) <= 1e-8);
    if (dense_feasible(spec, Checkpoint::final) && !spec.m1.quantum() && !spec.m2.quantum())
      CHECK(std::abs(exact - agreement_from_diagonal(spec)) <= 1e-8);
    if (spec.perfect_complete) CHECK(exact == doctest::Approx(1).epsilon(1e-12));
  }
}

TEST_CASE("worked examples") {
  const auto e1 = make_protocol("example1");
  CHECK(agreement_probability(e1, AgreementMethod::exact_enumeration) == doctest::Approx(1).epsilon(1e-12));

  CHECK(make_protocol("example2", {{"n", 2}}).alice_post.query_count() == 2);
  const auto e2 = make_protocol("example2", {{"n", 1}});
  CHECK(e2.alice_pre.query_count() + e2.alice_post.query_count() == 3);
  CHECK(e2.alice_record_registers == std::vector<std::pair<std::string, std::string>>{{"z", "y"}});
  const auto rho = purified_joint_state(e2, Checkpoint::final);
  const auto key = partial_trace(rho, {"A.key"}).matrix();
  CHECK(std::abs(key(2, 2)) < 1e-12);  // abort value never reached honestly
  CHECK(agreement_probability(e2, AgreementMethod::exact_enumeration) == doctest::Approx(1).epsilon(1e-12));
}

TEST_CASE("toy public-key schemes") {
  const auto qpke = make_protocol("toy-qpke");
  CHECK(qpke.kind == ProtocolKind::qpke_classical_keygen);
  CHECK(qpke.perfect_complete);
  CHECK(qpke.alice_pre.all_queries_classical());
  CHECK(agreement_probability(qpke, AgreementMethod::exact_enumeration) == doctest::Approx(1).epsilon(1e-12));

  // Alice's key-generation state is classical on her recorded registers.
  const auto rho = purified_joint_state(make_protocol("toy-qpke", {{"n", 1}}), Checkpoint::post_m1);
  Labels regs;
  for (const auto& [in, out] : qpke.alice_record_registers) {
    regs.push_back("A." + in);
    regs.push_back("A." + out);
  }
  if (regs.empty()) regs = {"A.sk", "A.y"};
  const Matrix rec = partial_trace(rho, regs).matrix();
  CHECK(max_abs(Matrix(rec - Matrix(rec.diagonal().asDiagonal()))) < 1e-12);

  const auto sk = make_protocol("short-sk", {{"delta", 0.9}});
  CHECK(agreement_probability(sk, AgreementMethod::exact_enumeration) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(agreement_probability(sk, AgreementMethod::purified_readout) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("purified and sampled executions agree on the protocol registers") {
  for (const std::string name : {"merkle", "example1", "example2", "parity-ka", "toy-qpke"}) {
    CAPTURE(name);
    const auto spec = make_protocol(name, {{"n", 1}});
    for (auto c : {Checkpoint::post_m1, Checkpoint::final}) {
      if (!dense_feasible(spec, c)) continue;
      const auto rho = purified_joint_state(spec, c);
      Labels keep;
      for (const auto& f : rho.layout().factors())
        if (f.label != "H") keep.push_back(f.label);
      const Matrix sampled = reduced_protocol_state_by_sampling(spec, c);
      CHECK(max_abs(Matrix(partial_trace(rho, keep).matrix() - sampled)) <= 1e-8);
    }
  }
}

TEST_CASE("sampled runs are deterministic") {
  const auto spec = make_protocol("merkle");
  const OracleMode mode{OracleMode::sampled, 7};
  const auto a = run_protocol(spec, mode, Checkpoint::final);
  const auto b = run_protocol(spec, mode, Checkpoint::final);
  CHECK(a.transcript == b.transcript);
  CHECK(a.oracle == b.oracle);
  REQUIRE(a.key_alice.has_value());
  CHECK(a.key_alice == b.key_alice);
  CHECK(a.key_bob == b.key_bob);

  const auto purified = run_protocol(spec, OracleMode{}, Checkpoint::final);
  CHECK(purified.state.total_weight() == doctest::Approx(1).epsilon(1e-12));
  CHECK_FALSE(purified.oracle.has_value());
}

TEST_CASE("protocol construction errors and names") {
  CHECK_THROWS_AS(make_protocol("no-such-protocol"), ValidationError);
  CHECK_THROWS(make_protocol("merkle", {{"n", 2}, {"d", 5}}));
  CHECK_THROWS(make_protocol("merkle", {{"n", 4}}));
  CHECK_THROWS(make_protocol("short-sk", {{"delta", 1.5}}));
  CHECK_THROWS_AS(make_protocol("merkle", nlohmann::json::array()), ValidationError);
  for (auto c : {Checkpoint::post_queries, Checkpoint::post_m1, Checkpoint::post_m2, Checkpoint::final})
    CHECK(checkpoint_from_string(to_string(c)) == c);
  const auto j = make_protocol("toy-qpke").to_json();
  CHECK(j.contains("kind"));
  CHECK(j.contains("params"));
  CHECK(builtin_protocols().size() == 11);
}
