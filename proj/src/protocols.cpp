#include "cmilab/protocols.hpp"

#include <algorithm>
#include <cmath>

#include "cmilab/rng.hpp"

namespace cmilab {

std::string to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::non_interactive_ka: return "non_interactive_ka";
    case ProtocolKind::two_round_ka: return "two_round_ka";
    case ProtocolKind::qpke_classical_keygen: return "qpke_classical_keygen";
    case ProtocolKind::qpke_quantum_pk: return "qpke_quantum_pk";
    case ProtocolKind::qpke_short_sk: return "qpke_short_sk";
  }
  return "?";
}

std::string to_string(Checkpoint c) {
  switch (c) {
    case Checkpoint::post_queries: return "post_queries";
    case Checkpoint::post_m1: return "post_m1";
    case Checkpoint::post_m2: return "post_m2";
    case Checkpoint::final: return "final";
  }
  return "?";
}

Checkpoint checkpoint_from_string(const std::string& s) {
  if (s == "post_queries") return Checkpoint::post_queries;
  if (s == "post_m1") return Checkpoint::post_m1;
  if (s == "post_m2") return Checkpoint::post_m2;
  if (s == "final") return Checkpoint::final;
  throw ValidationError("unknown checkpoint '" + s + "'");
}

nlohmann::ordered_json ProtocolSpec::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["kind"] = to_string(kind);
  j["n"] = n;
  j["params"] = params;
  j["queries"] = {{"alice_pre", alice_pre.query_count()},
                  {"bob_pre", bob_pre.query_count()},
                  {"alice_post", alice_post.query_count()},
                  {"bob_post", bob_post.query_count()}};
  j["query_width"] = query_width();
  auto msg = [](const MessageSpec& m) {
    nlohmann::ordered_json o;
    o["records"] = m.records;
    o["quantum_register"] = m.quantum() ? nlohmann::ordered_json(m.quantum_register) : nlohmann::ordered_json();
    return o;
  };
  j["m1"] = msg(m1);
  j["m2"] = msg(m2);
  j["perfect_complete"] = perfect_complete;
  j["caps"] = {{"dim_cap", default_dim_cap()},
               {"alice_dim", alice_post.registers.total_dim()},
               {"bob_dim", std::max(bob_pre.registers.total_dim(), bob_post.registers.total_dim())}};
  return j;
}

// ---------------------------------------------------------------- builders

namespace {

int param_int(const nlohmann::json& p, const char* key, int def) {
  if (!p.contains(key)) return def;
  if (!p.at(key).is_number_integer()) throw ValidationError(std::string("parameter '") + key + "' must be an integer");
  return p.at(key).get<int>();
}

double param_double(const nlohmann::json& p, const char* key, double def) {
  if (!p.contains(key)) return def;
  if (!p.at(key).is_number()) throw ValidationError(std::string("parameter '") + key + "' must be a number");
  return p.at(key).get<double>();
}

void require_range(int v, int lo, int hi, const char* what) {
  if (v < lo || v > hi)
    throw ValidationError(std::string(what) + " must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

Vector uniform_except(std::size_t dim, std::vector<std::size_t> excluded) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
  std::size_t count = 0;
  for (std::size_t x = 0; x < dim; ++x)
    if (std::find(excluded.begin(), excluded.end(), x) == excluded.end()) {
      v[static_cast<Eigen::Index>(x)] = 1;
      ++count;
    }
  if (count == 0) throw ValidationError("no admissible values left");
  return v / std::sqrt(static_cast<double>(count));
}

std::vector<double> uniform_probs(std::size_t k) { return std::vector<double>(k, 1.0 / static_cast<double>(k)); }

std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t d) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  auto rec = [&](auto&& self, std::size_t start) -> void {
    if (cur.size() == d) {
      out.push_back(cur);
      return;
    }
    for (std::size_t i = start; i < n; ++i) {
      cur.push_back(i);
      self(self, i + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

SystemLayout with(const SystemLayout& base, std::vector<Factor> extra) {
  auto f = base.factors();
  f.insert(f.end(), extra.begin(), extra.end());
  return SystemLayout(std::move(f));
}

SystemLayout without(const SystemLayout& base, const std::string& label) {
  if (label.empty()) return base;
  std::vector<Factor> f;
  for (const auto& x : base.factors())
    if (x.label != label) f.push_back(x);
  return SystemLayout(std::move(f));
}

// Unitary on span{|0>,|1>} of a dim-N register, identity elsewhere.
Matrix pair_hadamard(std::size_t dim) {
  Matrix u = Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  u.topLeftCorner(2, 2) = hadamard(1);
  return u;
}

std::int64_t ctx_at(const ClassicalContext& ctx, const std::string& key) {
  auto it = ctx.find(key);
  if (it == ctx.end()) throw ValidationError("missing classical input '" + key + "'");
  return it->second;
}

ProtocolSpec toy_qpke(int n, bool quantum_ct) {
  const std::size_t N = std::size_t{1} << n;
  ProtocolSpec s;
  s.kind = ProtocolKind::qpke_classical_keygen;
  s.name = quantum_ct ? "toy-qpke-qct" : "toy-qpke";
  s.n = n;
  s.alice_pre.registers = SystemLayout({{"sk", N}, {"y", 2}});
  s.alice_pre.steps = {CoinStep{"sk", uniform_probs(N), "sk", false}, QueryStep{QueryMode::classical, "sk", "y"}};
  s.alice_pre.outputs = {MeasureStep{"sk", "m1"}};
  s.m1.records = {"m1"};

  s.bob_pre.registers = SystemLayout({{"x", N}, {"b", 2}, {"c", 2}});
  s.bob_pre.steps = {
      PrepareStep{"x", [N](const ClassicalContext& ctx) { return uniform_except(N, {static_cast<std::size_t>(ctx_at(ctx, "m1"))}); }},
      // a quantum ciphertext must leave Bob in a product state, so b is sampled classically there
      CoinStep{"b", {0.5, 0.5}, quantum_ct ? "b" : "", !quantum_ct},
      xor_into("c", {"b"}, [](const auto& v, const auto&) { return v[0]; }, s.bob_pre.registers),
      QueryStep{QueryMode::xor_out, "x", "c"}};
  if (quantum_ct) s.bob_pre.steps.push_back(GateStep{{"c"}, hadamard(1)});
  s.bob_pre.outputs = {MeasureStep{"x", "m2.x"}};
  s.m2.records = {"m2.x"};
  if (quantum_ct) {
    s.m2.quantum_register = "c";
  } else {
    s.bob_pre.outputs.push_back(MeasureStep{"c", "m2.c"});
    s.m2.records.push_back("m2.c");
  }
  s.bob_key_register = "b";

  std::vector<Factor> extra;
  if (quantum_ct) extra.push_back({"c", 2});
  extra.insert(extra.end(), {{"xr", N}, {"q", 2}, {"key", 2}});
  s.alice_post.registers = with(s.alice_pre.registers, extra);
  s.alice_post.steps = {load_value("xr", N, [](const ClassicalContext& ctx) { return ctx_at(ctx, "m2.x"); }),
                        QueryStep{QueryMode::xor_out, "xr", "q"}};
  if (quantum_ct) {
    s.alice_post.steps.push_back(GateStep{{"c"}, hadamard(1)});
    s.alice_post.steps.push_back(
        xor_into("key", {"c", "q"}, [](const auto& v, const auto&) { return v[0] ^ v[1]; }, s.alice_post.registers));
  } else {
    s.alice_post.steps.push_back(xor_into(
        "key", {"q"}, [](const auto& v, const auto& ctx) { return v[0] ^ static_cast<std::uint64_t>(ctx_at(ctx, "m2.c")); },
        s.alice_post.registers));
  }
  s.alice_key_register = "key";
  s.alice_record_registers = {{"sk", "y"}};
  s.perfect_complete = true;
  return s;
}

ProtocolSpec example1(int n) {
  const std::size_t N = std::size_t{1} << n;
  ProtocolSpec s;
  s.kind = ProtocolKind::two_round_ka;
  s.name = "example1";
  s.n = n;
  s.alice_pre.registers = SystemLayout({{"idle", 1}});
  s.bob_pre.registers = SystemLayout({{"x", N}, {"k", 2}});
  s.bob_pre.steps = {CoinStep{"x", uniform_probs(N), "", true}, QueryStep{QueryMode::xor_out, "x", "k"}};
  s.bob_pre.outputs = {MeasureStep{"x", "m2.x"}};
  s.m2.records = {"m2.x"};
  s.bob_key_register = "k";
  s.alice_post.registers = with(s.alice_pre.registers, {{"xr", N}, {"key", 2}});
  s.alice_post.steps = {load_value("xr", N, [](const ClassicalContext& ctx) { return ctx_at(ctx, "m2.x"); }),
                        QueryStep{QueryMode::xor_out, "xr", "key"}};
  s.alice_key_register = "key";
  s.perfect_complete = true;
  return s;
}

ProtocolSpec example2(int n) {
  const std::size_t N = std::size_t{1} << n;
  if (N < 2) throw ValidationError("example2 needs n >= 1");
  ProtocolSpec s;
  s.kind = ProtocolKind::two_round_ka;
  s.name = "example2";
  s.n = n;
  s.alice_pre.registers = SystemLayout({{"z", N}, {"y", 2}});
  s.alice_pre.steps = {QueryStep{QueryMode::classical, "z", "y"}};
  s.bob_pre.registers = SystemLayout({{"x", N}, {"k", 2}});
  s.bob_pre.steps = {prepare_fixed("x", uniform_except(N, {0})), QueryStep{QueryMode::xor_out, "x", "k"}};
  s.bob_pre.outputs = {MeasureStep{"x", "m2.x"}};
  s.m2.records = {"m2.x"};
  s.bob_key_register = "k";
  s.alice_post.registers = with(s.alice_pre.registers, {{"z2", N}, {"y2", 2}, {"xr", N}, {"q", 2}, {"key", 3}});
  s.alice_post.steps = {
      QueryStep{QueryMode::classical, "z2", "y2"},
      load_value("xr", N, [](const ClassicalContext& ctx) { return ctx_at(ctx, "m2.x"); }),
      QueryStep{QueryMode::xor_out, "xr", "q"},
      // value 2 marks an abort
      xor_into("key", {"y", "y2", "q"}, [](const auto& v, const auto&) { return v[0] == v[1] ? v[2] : std::uint64_t{2}; },
               SystemLayout({{"y", 2}, {"y2", 2}, {"q", 2}, {"key", 3}}))};
  s.alice_key_register = "key";
  s.alice_record_registers = {{"z", "y"}};
  s.perfect_complete = true;
  return s;
}

ProtocolSpec merkle(int n, int d) {
  const std::size_t N = std::size_t{1} << n;
  require_range(d, 1, static_cast<int>(N), "merkle d");
  const auto sets = subsets(N, static_cast<std::size_t>(d));
  ProtocolSpec s;
  s.kind = ProtocolKind::non_interactive_ka;
  s.name = "merkle";
  s.n = n;
  auto party = [&](QueryCircuit& pre, QueryCircuit& post, const std::string& message, const std::string& incoming,
                   std::uint64_t bottom) {
    std::vector<Factor> f{{"s", sets.size()}};
    for (int i = 0; i < d; ++i) f.push_back({"x" + std::to_string(i), N});
    for (int i = 0; i < d; ++i) f.push_back({"y" + std::to_string(i), 2});
    pre.registers = SystemLayout(f);
    pre.steps.push_back(CoinStep{"s", uniform_probs(sets.size()), "s", false});
    for (int i = 0; i < d; ++i)
      pre.steps.push_back(load_value("x" + std::to_string(i), N, [sets, i](const ClassicalContext& ctx) {
        return sets[static_cast<std::size_t>(ctx_at(ctx, "s"))][static_cast<std::size_t>(i)];
      }));
    for (int i = 0; i < d; ++i)
      pre.steps.push_back(QueryStep{QueryMode::classical, "x" + std::to_string(i), "y" + std::to_string(i)});
    pre.outputs = {MeasureStep{"s", message}};
    post.registers = with(pre.registers, {{"key", 4}});
    Labels sources{"s"};
    for (int i = 0; i < d; ++i) sources.push_back("y" + std::to_string(i));
    // smallest common point wins; a disjoint pair yields a party-specific sentinel
    post.steps.push_back(xor_into(
        "key", sources,
        [sets, incoming, bottom](const std::vector<std::uint64_t>& v, const ClassicalContext& ctx) {
          const auto& mine = sets[v[0]];
          const auto& theirs = sets[static_cast<std::size_t>(ctx_at(ctx, incoming))];
          for (std::size_t i = 0; i < mine.size(); ++i)
            if (std::find(theirs.begin(), theirs.end(), mine[i]) != theirs.end()) return v[1 + i];
          return bottom;
        },
        post.registers));
  };
  party(s.alice_pre, s.alice_post, "m1", "m2", 2);
  party(s.bob_pre, s.bob_post, "m2", "m1", 3);
  s.m1.records = {"m1"};
  s.m2.records = {"m2"};
  s.alice_key_register = "key";
  s.bob_key_register = "key";
  s.perfect_complete = 2 * d > static_cast<int>(N);
  return s;
}

ProtocolSpec parity_ka(int n) {
  const std::size_t N = std::size_t{1} << n;
  if (N < 2) throw ValidationError("parity-ka needs n >= 1");
  ProtocolSpec s;
  s.kind = ProtocolKind::non_interactive_ka;
  s.name = "parity-ka";
  s.n = n;
  auto party = [&](QueryCircuit& pre, QueryCircuit& post) {
    pre.registers = SystemLayout({{"x", N}, {"y", 2}});
    Vector plus = Vector::Zero(static_cast<Eigen::Index>(N));
    plus[0] = plus[1] = 1 / std::sqrt(2.0);
    pre.steps = {prepare_fixed("x", plus), prepare_fixed("y", basis_vector(2, 1)), QueryStep{QueryMode::phase, "x", "y"}};
    post.registers = with(pre.registers, {{"key", 2}});
    post.steps = {GateStep{{"x"}, pair_hadamard(N)},
                  xor_into("key", {"x"}, [](const auto& v, const auto&) { return v[0] & 1; }, post.registers)};
  };
  party(s.alice_pre, s.alice_post);
  party(s.bob_pre, s.bob_post);
  s.alice_key_register = "key";
  s.bob_key_register = "key";
  s.perfect_complete = true;
  return s;
}

// Each component is [p_0, p_x for x in domain]: the query state
// sqrt(p_0)|0,0> + sum_x sqrt(p_x)|x,1>.
ProtocolSpec nonadaptive(int n, const std::vector<std::vector<double>>& components) {
  const std::size_t N = std::size_t{1} << n;
  if (components.empty()) throw ValidationError("nonadaptive protocol needs at least one query");
  ProtocolSpec s;
  s.kind = ProtocolKind::non_interactive_ka;
  s.name = "nonadaptive";
  s.n = n;
  auto party = [&](QueryCircuit& pre, QueryCircuit& post) {
    std::vector<Factor> f;
    for (std::size_t l = 0; l < components.size(); ++l) {
      f.push_back({"x" + std::to_string(l), N});
      f.push_back({"y" + std::to_string(l), 2});
    }
    pre.registers = SystemLayout(f);
    for (std::size_t l = 0; l < components.size(); ++l) {
      const auto& p = components[l];
      if (p.size() != N + 1) throw ValidationError("nonadaptive component must have 2^n + 1 entries");
      double total = 0;
      Vector sigma = Vector::Zero(static_cast<Eigen::Index>(2 * N));
      for (std::size_t k = 0; k <= N; ++k) {
        if (p[k] < 0) throw ValidationError("negative query probability");
        total += p[k];
      }
      if (std::abs(total - 1) > 1e-9) throw ValidationError("query probabilities must sum to 1");
      sigma[0] = std::sqrt(p[0]);
      for (std::size_t x = 0; x < N; ++x) sigma[static_cast<Eigen::Index>(2 * x + 1)] += std::sqrt(p[x + 1]);
      const auto xl = "x" + std::to_string(l), yl = "y" + std::to_string(l);
      pre.steps.push_back(GateStep{{xl, yl}, completion_unitary(sigma)});
    }
    for (std::size_t l = 0; l < components.size(); ++l)
      pre.steps.push_back(QueryStep{QueryMode::phase, "x" + std::to_string(l), "y" + std::to_string(l)});
    post.registers = pre.registers;
  };
  party(s.alice_pre, s.alice_post);
  party(s.bob_pre, s.bob_post);
  return s;
}

ProtocolSpec stored_values_ka(int n) {
  const std::size_t N = std::size_t{1} << n;
  ProtocolSpec s;
  s.kind = ProtocolKind::two_round_ka;
  s.name = "stored-values-ka";
  s.n = n;
  std::vector<Factor> f;
  for (std::size_t i = 0; i < N; ++i) f.push_back({"z" + std::to_string(i), N});
  for (std::size_t i = 0; i < N; ++i) f.push_back({"y" + std::to_string(i), 2});
  s.alice_pre.registers = SystemLayout(f);
  for (std::size_t i = 0; i < N; ++i) {
    s.alice_pre.steps.push_back(prepare_fixed("z" + std::to_string(i), basis_vector(N, i)));
    s.alice_pre.steps.push_back(QueryStep{QueryMode::classical, "z" + std::to_string(i), "y" + std::to_string(i)});
  }
  s.bob_pre.registers = SystemLayout({{"x", N}, {"b", 2}, {"c", 2}});
  s.bob_pre.steps = {CoinStep{"x", uniform_probs(N), "", true}, CoinStep{"b", {0.5, 0.5}, "", true},
                     xor_into("c", {"b"}, [](const auto& v, const auto&) { return v[0]; }, s.bob_pre.registers),
                     QueryStep{QueryMode::xor_out, "x", "c"}};
  s.bob_pre.outputs = {MeasureStep{"x", "m2.x"}, MeasureStep{"c", "m2.c"}};
  s.m2.records = {"m2.x", "m2.c"};
  s.bob_key_register = "b";
  s.alice_post.registers = with(s.alice_pre.registers, {{"key", 2}});
  Labels ys;
  for (std::size_t i = 0; i < N; ++i) ys.push_back("y" + std::to_string(i));
  s.alice_post.steps = {xor_into(
      "key", ys,
      [](const std::vector<std::uint64_t>& v, const ClassicalContext& ctx) {
        return v[static_cast<std::size_t>(ctx_at(ctx, "m2.x"))] ^ static_cast<std::uint64_t>(ctx_at(ctx, "m2.c"));
      },
      s.alice_post.registers)};
  s.alice_key_register = "key";
  for (std::size_t i = 0; i < N; ++i) s.alice_record_registers.push_back({"z" + std::to_string(i), "y" + std::to_string(i)});
  s.perfect_complete = true;
  return s;
}

ProtocolSpec quantum_pk(int n, bool clonable) {
  const std::size_t N = std::size_t{1} << n;
  if (N < (clonable ? 4u : 2u)) throw ValidationError(clonable ? "clonable-pk needs n >= 2" : "pure-pk needs n >= 1");
  ProtocolSpec s;
  s.kind = ProtocolKind::qpke_quantum_pk;
  s.name = clonable ? "clonable-pk" : "pure-pk";
  s.n = n;
  std::vector<Factor> f{{"sk", N}, {"y", 2}};
  if (clonable) f.push_back({"lbl", 2});
  f.push_back({"pk", N});
  s.alice_pre.registers = SystemLayout(f);
  s.alice_pre.steps = {CoinStep{"sk", uniform_probs(N), "sk", false}, QueryStep{QueryMode::classical, "sk", "y"},
                       MeasureStep{"y", "y"}};
  if (clonable) s.alice_pre.steps.push_back(CoinStep{"lbl", {0.5, 0.5}, "lbl", false});
  s.alice_pre.steps.push_back(PrepareStep{"pk", [N, clonable](const ClassicalContext& ctx) {
    const auto r = static_cast<std::size_t>(ctx_at(ctx, "sk"));
    const auto partner = r ^ (clonable ? static_cast<std::size_t>(ctx_at(ctx, "lbl")) + 1 : 1);
    Vector v = Vector::Zero(static_cast<Eigen::Index>(N));
    v[static_cast<Eigen::Index>(r)] = 1 / std::sqrt(2.0);
    v[static_cast<Eigen::Index>(partner)] = (ctx_at(ctx, "y") ? -1.0 : 1.0) / std::sqrt(2.0);
    return v;
  }});
  if (clonable) {
    s.alice_pre.outputs = {MeasureStep{"lbl", "m1.label"}};
    s.m1.records = {"m1.label"};
  }
  s.m1.quantum_register = "pk";

  s.bob_pre.registers = SystemLayout({{"pk", N}, {"x", N}, {"b", 2}, {"c", 2}});
  s.bob_pre.steps = {xor_into("x", {"pk"}, [](const auto& v, const auto&) { return v[0]; }, s.bob_pre.registers),
                     CoinStep{"b", {0.5, 0.5}, "", true},
                     xor_into("c", {"b"}, [](const auto& v, const auto&) { return v[0]; }, s.bob_pre.registers),
                     QueryStep{QueryMode::xor_out, "x", "c"}};
  s.bob_pre.outputs = {MeasureStep{"x", "m2.x"}, MeasureStep{"c", "m2.c"}};
  s.m2.records = {"m2.x", "m2.c"};
  s.bob_key_register = "b";

  s.alice_post.registers = with(without(s.alice_pre.registers, "pk"), {{"xr", N}, {"q", 2}, {"key", 2}});
  s.alice_post.steps = {load_value("xr", N, [](const ClassicalContext& ctx) { return ctx_at(ctx, "m2.x"); }),
                        QueryStep{QueryMode::xor_out, "xr", "q"},
                        xor_into("key", {"q"},
                                 [](const auto& v, const auto& ctx) {
                                   return v[0] ^ static_cast<std::uint64_t>(ctx_at(ctx, "m2.c"));
                                 },
                                 SystemLayout({{"q", 2}, {"key", 2}}))};
  s.alice_key_register = "key";
  s.alice_record_registers = {{"sk", "y"}};
  s.perfect_complete = true;
  return s;
}

// n = 1. sk is a coin over `sk_values` in {1, 2}; pk = sk; Bob encrypts b with
// x = u xor pk and flips the ciphertext bit with probability 1 - delta.
ProtocolSpec short_sk(double delta, int sk_values) {
  if (!(delta >= 0 && delta <= 1)) throw ValidationError("delta must be in [0, 1]");
  require_range(sk_values, 1, 2, "short-sk sk_values");
  ProtocolSpec s;
  s.kind = ProtocolKind::qpke_short_sk;
  s.name = "short-sk";
  s.n = 1;
  s.alice_pre.registers = SystemLayout({{"sk", 2}});
  std::vector<double> skp(2, 0.0);
  for (int i = 0; i < sk_values; ++i) skp[static_cast<std::size_t>(i)] = 1.0 / sk_values;
  s.alice_pre.steps = {CoinStep{"sk", skp, "sk", false}};
  s.alice_pre.outputs = {MeasureStep{"sk", "m1"}};
  s.m1.records = {"m1"};
  s.bob_pre.registers = SystemLayout({{"u", 2}, {"b", 2}, {"xr", 2}, {"c", 2}, {"f", 2}});
  const auto& lb = s.bob_pre.registers;
  s.bob_pre.steps = {
      CoinStep{"u", {0.5, 0.5}, "", true}, CoinStep{"b", {0.5, 0.5}, "", true},
      xor_into("c", {"b"}, [](const auto& v, const auto&) { return v[0]; }, lb),
      xor_into("xr", {"u"}, [](const auto& v, const auto& ctx) { return v[0] ^ static_cast<std::uint64_t>(ctx_at(ctx, "m1")); }, lb),
      QueryStep{QueryMode::xor_out, "xr", "c"},
      CoinStep{"f", {delta, 1 - delta}, "", true},
      xor_into("c", {"f"}, [](const auto& v, const auto&) { return v[0]; }, lb)};
  s.bob_pre.outputs = {MeasureStep{"u", "m2.u"}, MeasureStep{"c", "m2.c"}};
  s.m2.records = {"m2.u", "m2.c"};
  s.bob_key_register = "b";
  s.alice_post.registers = with(s.alice_pre.registers, {{"xa", 2}, {"q", 2}, {"key", 2}});
  s.alice_post.steps = {
      xor_into("xa", {"sk"}, [](const auto& v, const auto& ctx) { return v[0] ^ static_cast<std::uint64_t>(ctx_at(ctx, "m2.u")); },
               s.alice_post.registers),
      QueryStep{QueryMode::xor_out, "xa", "q"},
      xor_into("key", {"q"}, [](const auto& v, const auto& ctx) { return v[0] ^ static_cast<std::uint64_t>(ctx_at(ctx, "m2.c")); },
               s.alice_post.registers)};
  s.alice_key_register = "key";
  s.secret_key_register = "sk";
  s.secret_key_values = static_cast<std::size_t>(sk_values);
  s.perfect_complete = delta == 1.0;
  return s;
}

}  // namespace

std::vector<std::string> builtin_protocols() {
  return {"merkle",      "example1",    "example2",    "toy-qpke",         "toy-qpke-qct", "pure-pk",
          "clonable-pk", "parity-ka",   "nonadaptive", "stored-values-ka", "short-sk"};
}

ProtocolSpec make_protocol(const std::string& name, const nlohmann::json& params) {
  if (!params.is_object()) throw ValidationError("protocol parameters must be a JSON object");
  ProtocolSpec s;
  nlohmann::ordered_json echo;
  if (name == "merkle") {
    const int n = param_int(params, "n", 2), d = param_int(params, "d", 2);
    require_range(n, 1, 3, "n");
    s = merkle(n, d);
    echo = {{"n", n}, {"d", d}};
  } else if (name == "example1" || name == "example2" || name == "toy-qpke" || name == "toy-qpke-qct" ||
             name == "pure-pk" || name == "clonable-pk" || name == "parity-ka" || name == "stored-values-ka") {
    const int def = name == "parity-ka" || name == "stored-values-ka" || name == "pure-pk" ? 1 : 2;
    const int n = param_int(params, "n", def);
    require_range(n, 1, 3, "n");
    if (name == "example1") s = example1(n);
    else if (name == "example2") s = example2(n);
    else if (name == "toy-qpke") s = toy_qpke(n, false);
    else if (name == "toy-qpke-qct") s = toy_qpke(n, true);
    else if (name == "pure-pk") s = quantum_pk(n, false);
    else if (name == "clonable-pk") s = quantum_pk(n, true);
    else if (name == "parity-ka") s = parity_ka(n);
    else s = stored_values_ka(n);
    echo = {{"n", n}};
  } else if (name == "nonadaptive") {
    const int n = param_int(params, "n", 1);
    require_range(n, 1, 2, "n");
    std::vector<std::vector<double>> comps;
    if (params.contains("components")) {
      comps = params.at("components").get<std::vector<std::vector<double>>>();
    } else {
      const std::size_t N = std::size_t{1} << n;
      comps = {std::vector<double>(N + 1, 1.0 / static_cast<double>(N + 1))};
    }
    s = nonadaptive(n, comps);
    echo = {{"n", n}, {"components", comps}};
  } else if (name == "short-sk") {
    const double delta = param_double(params, "delta", 1.0);
    const int k = param_int(params, "sk_values", 2);
    s = short_sk(delta, k);
    echo = {{"delta", delta}, {"sk_values", k}};
  } else {
    throw ValidationError("unknown protocol '" + name + "'");
  }
  s.params = echo;
  if (s.bob_post.registers.empty()) s.bob_post.registers = layouts_at(s, Checkpoint::post_m2).bob;
  if (s.kind == ProtocolKind::qpke_classical_keygen && !s.alice_pre.all_queries_classical())
    throw ConstructionError("classical key generation must use classical queries only");
  if (!s.two_round() && (s.m1.quantum() || s.m2.quantum()))
    throw ConstructionError("non-interactive protocols exchange classical messages only");
  if (s.perfect_complete) {
    const double p = agreement_probability(s, AgreementMethod::exact_enumeration);
    if (std::abs(p - 1) > 1e-12)
      throw ConstructionError("protocol '" + name + "' is flagged perfectly complete but agrees with probability " +
                              std::to_string(p));
  }
  return s;
}

// ---------------------------------------------------------------- execution

PartyLayouts layouts_at(const ProtocolSpec& spec, Checkpoint c) {
  PartyLayouts l;
  const bool two = spec.two_round();
  const auto alice_sent = without(spec.alice_pre.registers, spec.m1.quantum_register);
  if (c == Checkpoint::final) l.alice = spec.alice_post.registers;
  else if (!two && c == Checkpoint::post_queries) l.alice = spec.alice_pre.registers;
  else l.alice = alice_sent;

  const auto bob_start = without(spec.bob_pre.registers, spec.m1.quantum_register);
  const auto bob_sent = without(spec.bob_pre.registers, spec.m2.quantum_register);
  if (c == Checkpoint::final) l.bob = spec.bob_post.registers.empty() ? bob_sent : spec.bob_post.registers;
  else if (two && c == Checkpoint::post_m1) l.bob = bob_start;
  else if (c == Checkpoint::post_m2) l.bob = bob_sent;
  else l.bob = spec.bob_pre.registers;
  return l;
}

namespace {

ClassicalContext pick(const ClassicalContext& from, const Labels& names) {
  ClassicalContext out;
  for (const auto& n : names) {
    auto it = from.find(n);
    if (it == from.end()) throw ValidationError("message record '" + n + "' was not produced");
    out[n] = it->second;
  }
  return out;
}

void merge_records(ClassicalContext& into, const ClassicalContext& from, const std::string& prefix) {
  for (const auto& [k, v] : from) into[prefix + k] = v;
}

std::vector<Path> measure_key(const SystemLayout& layout, const std::string& reg, const Vector& psi) {
  QueryCircuit m;
  m.registers = layout;
  m.steps = {MeasureStep{reg, "key"}};
  return run_circuit(m, OracleFunction(0, {0}), {}, psi);
}

}  // namespace

std::vector<JointBranch> execute_protocol(const ProtocolSpec& spec, const OracleFunction& h, Checkpoint c,
                                          const ExecuteOptions& opt) {
  if (h.n() != spec.n) throw ValidationError("oracle input length does not match the protocol");
  const bool two = spec.two_round();
  const bool alice_outputs = two || c != Checkpoint::post_queries;
  const bool bob_runs = !(two && c == Checkpoint::post_m1);
  const bool bob_outputs = c == Checkpoint::post_m2 || c == Checkpoint::final;
  const auto& la = spec.alice_pre.registers;
  const auto& lb = spec.bob_pre.registers;
  const auto bob_start = without(lb, spec.m1.quantum_register);

  ExecOptions aopt;
  aopt.run_outputs = alice_outputs;
  const auto apaths = run_circuit(spec.alice_pre, h, {}, zero_state(la), aopt);

  std::vector<JointBranch> stage;
  for (const auto& ap : apaths) {
    JointBranch jb;
    jb.alice_records = ap.records;
    jb.alice = ap.amplitudes;
    if (alice_outputs) {
      jb.transcript = pick(ap.records, spec.m1.records);
      if (spec.m1.quantum()) {
        auto [m, rest] = split_factor(jb.alice, la, spec.m1.quantum_register);
        jb.alice = rest;
        jb.in_flight[spec.m1.quantum_register] = m;
      }
    }
    if (!bob_runs) {
      jb.bob = zero_state(bob_start);
      stage.push_back(std::move(jb));
      continue;
    }
    Vector init;
    if (two && spec.m1.quantum()) {
      init = embed_state(Vector::Ones(1), SystemLayout(), lb, {{spec.m1.quantum_register, jb.in_flight.at(spec.m1.quantum_register)}});
      jb.in_flight.erase(spec.m1.quantum_register);
    } else {
      init = zero_state(lb);
    }
    ExecOptions bopt;
    bopt.run_outputs = bob_outputs;
    const auto bpaths = run_circuit(spec.bob_pre, h, two ? jb.transcript : ClassicalContext{}, init, bopt);
    for (const auto& bp : bpaths) {
      JointBranch j2 = jb;
      j2.bob_records = bp.records;
      j2.bob = bp.amplitudes;
      if (bob_outputs) {
        for (auto& [k, v] : pick(bp.records, spec.m2.records)) j2.transcript[k] = v;
        if (spec.m2.quantum()) {
          auto [m, rest] = split_factor(j2.bob, lb, spec.m2.quantum_register);
          j2.bob = rest;
          j2.in_flight[spec.m2.quantum_register] = m;
        }
      }
      stage.push_back(std::move(j2));
    }
  }
  if (c != Checkpoint::final) return stage;

  const auto la_sent = without(la, spec.m1.quantum_register);
  const auto lb_sent = without(lb, spec.m2.quantum_register);
  std::vector<JointBranch> out;
  for (auto& jb : stage) {
    const auto to_alice = pick(jb.transcript, spec.m2.records);
    const auto to_bob = pick(jb.transcript, spec.m1.records);
    std::map<std::string, Vector> fill;
    if (spec.m2.quantum()) fill[spec.m2.quantum_register] = jb.in_flight.at(spec.m2.quantum_register);
    const Vector ainit = embed_state(jb.alice, la_sent, spec.alice_post.registers, fill);
    const auto a2 = run_circuit(spec.alice_post, h, to_alice, ainit);
    const Vector binit = embed_state(jb.bob, lb_sent, spec.bob_post.registers);
    const auto b2 = run_circuit(spec.bob_post, h, to_bob, binit);
    for (const auto& ap : a2)
      for (const auto& bp : b2) {
        std::vector<Path> akeys{ap}, bkeys{bp};
        if (opt.measure_keys && spec.has_keys()) {
          akeys = measure_key(spec.alice_post.registers, spec.alice_key_register, ap.amplitudes);
          bkeys = measure_key(spec.bob_post.registers, spec.bob_key_register, bp.amplitudes);
        }
        for (const auto& ak : akeys)
          for (const auto& bk : bkeys) {
            JointBranch j = jb;
            j.in_flight.clear();
            merge_records(j.alice_records, ap.records, "post.");
            merge_records(j.bob_records, bp.records, "post.");
            if (opt.measure_keys && spec.has_keys()) {
              j.alice_records["key"] = ak.records.at("key");
              j.bob_records["key"] = bk.records.at("key");
            }
            j.alice = ak.amplitudes;
            j.bob = bk.amplitudes;
            out.push_back(std::move(j));
          }
      }
  }
  return out;
}

Ensemble branches_to_ensemble(const std::vector<JointBranch>& branches, const OracleFunction& h, double oracle_weight) {
  Ensemble e;
  for (const auto& jb : branches) {
    const double w = jb.weight();
    if (w <= 1e-15) continue;
    Branch b;
    b.weight = oracle_weight * w;
    b.classical["H"] = static_cast<std::int64_t>(h.index());
    for (const auto& [k, v] : jb.alice_records) b.classical["A." + k] = v;
    for (const auto& [k, v] : jb.bob_records) b.classical["B." + k] = v;
    for (const auto& [k, v] : jb.transcript) b.classical["pi." + k] = v;
    b.units["A"] = Unit{jb.alice / jb.alice.norm(), 1};
    b.units["B"] = Unit{jb.bob / jb.bob.norm(), 1};
    for (const auto& [reg, v] : jb.in_flight) b.units["M:" + reg] = Unit{v / v.norm(), 1};
    e.add(std::move(b));
  }
  e.set_classical_dim("H", std::size_t{1} << h.domain_size());
  return e;
}

ProtocolRun run_protocol(const ProtocolSpec& spec, OracleMode mode, Checkpoint c) {
  ProtocolRun run;
  run.checkpoint = c;
  run.layouts = layouts_at(spec, c);
  if (mode.kind == OracleMode::purified) {
    const auto oracles = enumerate_oracles(spec.n);
    for (const auto& h : oracles) {
      const auto part = branches_to_ensemble(execute_protocol(spec, h, c), h, 1.0 / static_cast<double>(oracles.size()));
      for (const auto& b : part.branches()) run.state.add(b);
    }
    run.state.set_classical_dim("H", oracles.size());
    return run;
  }
  const auto h = sample_oracle(spec.n, derive_seed(mode.seed, 0));
  run.oracle = h;
  const auto branches = execute_protocol(spec, h, c);
  run.state = branches_to_ensemble(branches, h, 1.0);
  std::vector<double> w;
  for (const auto& b : branches) w.push_back(b.weight());
  Rng rng(derive_seed(mode.seed, 1));
  const auto& chosen = branches.at(rng.categorical(w));
  run.transcript = chosen.transcript;
  if (c == Checkpoint::final && spec.has_keys()) {
    run.key_alice = chosen.alice_records.at("key");
    run.key_bob = chosen.bob_records.at("key");
  }
  return run;
}

DensityMatrix purified_joint_state(const ProtocolSpec& spec, Checkpoint c) {
  const auto oracles = enumerate_oracles(spec.n);
  const auto layouts = layouts_at(spec, c);
  const std::size_t fdim = oracles.size();
  const SystemLayout layout = layouts.alice.renamed([](const std::string& l) { return "A." + l; })
                                  .concat(layouts.bob.renamed([](const std::string& l) { return "B." + l; }))
                                  .concat(SystemLayout({{"H", fdim}}));
  const auto dim = static_cast<Eigen::Index>(layout.total_dim());
  std::map<std::pair<ClassicalContext, ClassicalContext>, Vector> outcomes;
  const double amp = 1 / std::sqrt(static_cast<double>(fdim));
  for (const auto& h : oracles) {
    for (const auto& jb : execute_protocol(spec, h, c)) {
      if (!jb.in_flight.empty()) throw ValidationError("purified joint state needs all quantum messages delivered");
      auto [it, fresh] = outcomes.try_emplace({jb.alice_records, jb.bob_records}, Vector::Zero(dim));
      it->second += amp * kron(kron(jb.alice, jb.bob), basis_vector(fdim, h.index()));
    }
  }
  Matrix rho = Matrix::Zero(dim, dim);
  for (const auto& [k, phi] : outcomes) rho.noalias() += phi * phi.adjoint();
  return DensityMatrix(layout, std::move(rho), false);
}

double agreement_probability(const ProtocolSpec& spec, AgreementMethod method) {
  if (!spec.has_keys()) throw ValidationError("protocol '" + spec.name + "' has no key registers");
  const auto oracles = enumerate_oracles(spec.n);
  const double ow = 1.0 / static_cast<double>(oracles.size());
  double p = 0;
  for (const auto& h : oracles) {
    if (method == AgreementMethod::exact_enumeration) {
      for (const auto& jb : execute_protocol(spec, h, Checkpoint::final))
        if (jb.alice_records.at("key") == jb.bob_records.at("key")) p += ow * jb.weight();
    } else {
      ExecuteOptions opt;
      opt.measure_keys = false;
      for (const auto& jb : execute_protocol(spec, h, Checkpoint::final, opt)) {
        const auto pa = register_distribution(jb.alice, spec.alice_post.registers, spec.alice_key_register);
        const auto pb = register_distribution(jb.bob, spec.bob_post.registers, spec.bob_key_register);
        for (std::size_t k = 0; k < std::min(pa.size(), pb.size()); ++k) p += ow * pa[k] * pb[k];
      }
    }
  }
  return p;
}

std::vector<double> key_distribution(const QueryCircuit& post, const SystemLayout& from, const Vector& state,
                                     const std::string& key_register, const OracleFunction& h,
                                     const ClassicalContext& ctx, const std::map<std::string, Vector>& fill) {
  const Vector init = embed_state(state, from, post.registers, fill);
  std::vector<double> dist(post.registers.dim_of(key_register), 0.0);
  for (const auto& p : run_circuit(post, h, ctx, init)) {
    const auto d = register_distribution(p.amplitudes, post.registers, key_register);
    for (std::size_t k = 0; k < d.size(); ++k) dist[k] += d[k];
  }
  return dist;
}

PurifiedOracleState run_purified_circuit(const QueryCircuit& c, PurifiedOracleState s, const ClassicalContext& ctx) {
  auto permutation_matrix = [&](const PermuteStep& p) {
    std::size_t dt = 1;
    for (const auto& t : p.targets) dt *= s.layout().dim_of(t);
    Matrix u = Matrix::Zero(static_cast<Eigen::Index>(dt), static_cast<Eigen::Index>(dt));
    for (std::size_t j = 0; j < dt; ++j) u(static_cast<Eigen::Index>(p.map(j, ctx)), static_cast<Eigen::Index>(j)) = 1;
    if (!(u.adjoint() * u).isIdentity(1e-12)) throw ValidationError("permutation step is not a bijection");
    return u;
  };
  auto run_step = [&](const Step& step) {
    std::visit(
        [&](const auto& st) {
          using T = std::decay_t<decltype(st)>;
          if constexpr (std::is_same_v<T, GateStep>) {
            s = apply_gate(s, st.targets, st.unitary);
          } else if constexpr (std::is_same_v<T, PermuteStep>) {
            s = apply_gate(s, st.targets, permutation_matrix(st));
          } else if constexpr (std::is_same_v<T, PrepareStep>) {
            s = apply_gate(s, {st.target}, completion_unitary(st.state(ctx)));
          } else if constexpr (std::is_same_v<T, CoinStep>) {
            Vector amp(static_cast<Eigen::Index>(st.probs.size()));
            for (std::size_t i = 0; i < st.probs.size(); ++i) amp[static_cast<Eigen::Index>(i)] = std::sqrt(st.probs[i]);
            s = apply_gate(s, {st.target}, completion_unitary(amp));
            if (!st.coherent) s = measure_register(s, st.target);
          } else if constexpr (std::is_same_v<T, QueryStep>) {
            if (st.mode == QueryMode::classical) s = measure_register(s, st.input);
            s = apply_query(s, st.mode, st.input, st.output);
          } else if constexpr (std::is_same_v<T, MeasureStep>) {
            s = measure_register(s, st.target);
          }
        },
        step);
  };
  for (const auto& st : c.steps) run_step(st);
  for (const auto& st : c.outputs) run_step(st);
  return s;
}

}  // namespace cmilab
