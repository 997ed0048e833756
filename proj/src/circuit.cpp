#include "cmilab/circuit.hpp"

#include <cmath>
#include <set>

#include <Eigen/SVD>

#include "index_util.hpp"

namespace cmilab {

int QueryCircuit::query_count() const {
  int d = 0;
  for (const auto* list : {&steps, &outputs})
    for (const auto& s : *list) d += std::holds_alternative<QueryStep>(s) ? 1 : 0;
  return d;
}

bool QueryCircuit::all_queries_classical() const {
  for (const auto* list : {&steps, &outputs})
    for (const auto& s : *list)
      if (auto q = std::get_if<QueryStep>(&s); q && q->mode != QueryMode::classical) return false;
  return true;
}

Vector zero_state(const SystemLayout& layout) { return basis_vector(layout.total_dim(), 0); }

namespace {

ClassicalContext merged(const ClassicalContext& inputs, const ClassicalContext& records) {
  ClassicalContext ctx = inputs;
  for (const auto& [k, v] : records) {
    auto [it, fresh] = ctx.emplace(k, v);
    if (!fresh && it->second != v) throw ValidationError("record '" + k + "' clashes with an input value");
  }
  return ctx;
}

std::vector<Path> measure(std::vector<Path> paths, const SystemLayout& layout, const std::string& target,
                          const std::string& record, double drop_below) {
  const auto strides = layout.strides();
  const auto p = layout.position(target);
  const auto dim = layout[p].dim;
  std::vector<Path> out;
  for (auto& path : paths) {
    std::vector<Vector> parts(dim, Vector::Zero(path.amplitudes.size()));
    for (Eigen::Index i = 0; i < path.amplitudes.size(); ++i)
      parts[(static_cast<std::size_t>(i) / strides[p]) % dim][i] = path.amplitudes[i];
    for (std::size_t v = 0; v < dim; ++v) {
      if (parts[v].squaredNorm() <= drop_below) continue;
      Path next{path.records, std::move(parts[v])};
      auto [it, fresh] = next.records.emplace(record, static_cast<std::int64_t>(v));
      if (!fresh) throw ValidationError("record '" + record + "' written twice");
      out.push_back(std::move(next));
    }
  }
  return out;
}

void apply_query_vector(Vector& psi, const SystemLayout& layout, const OracleFunction& h, const QueryStep& q) {
  const auto strides = layout.strides();
  const auto pin = layout.position(q.input), pout = layout.position(q.output);
  if (layout[pin].dim != h.domain_size()) throw LayoutError("query input register must have dimension 2^n");
  if (layout[pout].dim != 2) throw LayoutError("query output register must be a qubit");
  const auto din = layout[pin].dim;
  const auto sy = strides[pout];
  for (Eigen::Index i = 0; i < psi.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto x = (ui / strides[pin]) % din;
    const auto y = (ui / sy) % 2;
    if (!h(x)) continue;
    if (q.mode == QueryMode::phase) {
      if (y) psi[i] = -psi[i];
    } else if (y == 0) {
      std::swap(psi[i], psi[static_cast<Eigen::Index>(ui + sy)]);
    }
  }
}

void apply_permutation(Path& path, const SystemLayout& layout, const PermuteStep& step, const ClassicalContext& ctx) {
  const auto split = detail::split_index(layout, step.targets);
  const auto dt = split.target_offsets.size();
  std::vector<std::size_t> image(dt);
  std::vector<bool> hit(dt, false);
  for (std::size_t j = 0; j < dt; ++j) {
    const auto to = step.map(j, ctx);
    if (to >= dt || hit[to]) throw ValidationError("permutation step is not a bijection");
    hit[to] = true;
    image[j] = to;
  }
  Vector next(path.amplitudes.size());
  for (auto r : split.rest_offsets)
    for (std::size_t j = 0; j < dt; ++j)
      next[r + split.target_offsets[image[j]]] = path.amplitudes[r + split.target_offsets[j]];
  path.amplitudes = std::move(next);
}

}  // namespace

std::vector<Path> run_circuit(const QueryCircuit& c, const OracleFunction& h, const ClassicalContext& inputs,
                              std::vector<Path> paths, const ExecOptions& opt) {
  const auto& layout = c.registers;
  for (const auto& p : paths)
    if (static_cast<std::size_t>(p.amplitudes.size()) != layout.total_dim())
      throw LayoutError("initial state does not match the circuit registers");
  int query_index = 0;
  auto run_step = [&](const Step& step) {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, GateStep>) {
            for (auto& p : paths) apply_local(p.amplitudes, layout, s.targets, s.unitary);
          } else if constexpr (std::is_same_v<T, PermuteStep>) {
            for (auto& p : paths) apply_permutation(p, layout, s, merged(inputs, p.records));
          } else if constexpr (std::is_same_v<T, PrepareStep>) {
            for (auto& p : paths) {
              const Vector target = s.state(merged(inputs, p.records));
              if (static_cast<std::size_t>(target.size()) != layout.dim_of(s.target))
                throw LayoutError("prepared state has the wrong dimension for '" + s.target + "'");
              apply_local(p.amplitudes, layout, {s.target}, completion_unitary(target));
            }
          } else if constexpr (std::is_same_v<T, CoinStep>) {
            if (s.probs.size() != layout.dim_of(s.target)) throw LayoutError("coin distribution size mismatch");
            Vector amp(static_cast<Eigen::Index>(s.probs.size()));
            for (std::size_t i = 0; i < s.probs.size(); ++i) {
              if (s.probs[i] < 0) throw ValidationError("negative coin probability");
              amp[static_cast<Eigen::Index>(i)] = std::sqrt(s.probs[i]);
            }
            const Matrix u = completion_unitary(amp);
            for (auto& p : paths) apply_local(p.amplitudes, layout, {s.target}, u);
            if (!s.coherent) paths = measure(std::move(paths), layout, s.target, s.record, opt.drop_below);
          } else if constexpr (std::is_same_v<T, QueryStep>) {
            if (s.mode == QueryMode::classical)
              paths = measure(std::move(paths), layout, s.input, "#cq" + std::to_string(query_index), opt.drop_below);
            if (opt.on_query)
              for (const auto& p : paths) opt.on_query(QueryEvent{query_index, &s, &p});
            for (auto& p : paths) apply_query_vector(p.amplitudes, layout, h, s);
            ++query_index;
          } else if constexpr (std::is_same_v<T, MeasureStep>) {
            paths = measure(std::move(paths), layout, s.target, s.record, opt.drop_below);
          }
        },
        step);
  };
  for (const auto& s : c.steps) run_step(s);
  if (opt.run_outputs)
    for (const auto& s : c.outputs) run_step(s);
  return paths;
}

std::vector<Path> run_circuit(const QueryCircuit& c, const OracleFunction& h, const ClassicalContext& inputs,
                              const Vector& initial, const ExecOptions& opt) {
  return run_circuit(c, h, inputs, std::vector<Path>{Path{{}, initial}}, opt);
}

Vector embed_state(const Vector& psi, const SystemLayout& from, const SystemLayout& to,
                   const std::map<std::string, Vector>& fill) {
  if (static_cast<std::size_t>(psi.size()) != from.total_dim()) throw LayoutError("state does not match its layout");
  std::vector<Factor> missing;
  Vector v = psi;
  for (const auto& f : to.factors()) {
    if (auto i = from.index_of(f.label)) {
      if (from[*i].dim != f.dim) throw LayoutError("factor '" + f.label + "' changes dimension");
      continue;
    }
    missing.push_back(f);
    auto it = fill.find(f.label);
    if (it != fill.end()) {
      if (static_cast<std::size_t>(it->second.size()) != f.dim) throw LayoutError("fill state for '" + f.label + "' has the wrong size");
      v = kron(v, it->second);
    } else {
      v = kron(v, basis_vector(f.dim, 0));
    }
  }
  if (from.size() + missing.size() != to.size()) throw LayoutError("target layout drops factors of the source");
  const SystemLayout cat = from.concat(SystemLayout(missing));
  return permute_factors(v, cat, to.labels());
}

std::pair<Vector, Vector> split_factor(const Vector& psi, const SystemLayout& layout, const std::string& label) {
  const auto split = detail::split_index(layout, {label});
  const auto dl = static_cast<Eigen::Index>(split.target_offsets.size());
  const auto dr = static_cast<Eigen::Index>(split.rest_offsets.size());
  Matrix m(dl, dr);
  for (Eigen::Index r = 0; r < dr; ++r)
    for (Eigen::Index i = 0; i < dl; ++i) m(i, r) = psi[split.rest_offsets[r] + split.target_offsets[i]];
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() > 1 && sv[1] > 1e-8 * std::max(sv[0], 1e-300))
    throw ModeError("register '" + label + "' is entangled with the rest of the party's state");
  Vector a = svd.matrixU().col(0);
  Vector b = sv[0] * svd.matrixV().col(0).conjugate();
  return {a, b};
}

std::vector<double> register_distribution(const Vector& psi, const SystemLayout& layout, const std::string& label) {
  const auto strides = layout.strides();
  const auto p = layout.position(label);
  const auto dim = layout[p].dim;
  std::vector<double> out(dim, 0.0);
  for (Eigen::Index i = 0; i < psi.size(); ++i) out[(static_cast<std::size_t>(i) / strides[p]) % dim] += std::norm(psi[i]);
  return out;
}

PermuteStep xor_into(const std::string& target, const Labels& sources,
                     std::function<std::uint64_t(const std::vector<std::uint64_t>&, const ClassicalContext&)> f,
                     const SystemLayout& layout) {
  std::vector<std::size_t> dims;
  for (const auto& s : sources) dims.push_back(layout.dim_of(s));
  const std::size_t dt = layout.dim_of(target);
  Labels targets = sources;
  targets.push_back(target);
  PermuteStep step;
  step.targets = targets;
  step.map = [dims, dt, f](std::uint64_t j, const ClassicalContext& ctx) {
    const std::uint64_t t = j % dt;
    std::uint64_t rest = j / dt;
    std::vector<std::uint64_t> vals(dims.size());
    for (std::size_t i = dims.size(); i-- > 0;) {
      vals[i] = rest % dims[i];
      rest /= dims[i];
    }
    const std::uint64_t shift = f(vals, ctx) % dt;
    return j - t + (t + shift) % dt;
  };
  return step;
}

PrepareStep prepare_fixed(const std::string& target, Vector state) {
  return PrepareStep{target, [state = std::move(state)](const ClassicalContext&) { return state; }};
}

PrepareStep load_value(const std::string& target, std::size_t dim, std::function<std::uint64_t(const ClassicalContext&)> value) {
  return PrepareStep{target, [dim, value = std::move(value)](const ClassicalContext& ctx) {
                       const auto v = value(ctx);
                       if (v >= dim) throw ValidationError("loaded value out of register range");
                       return basis_vector(dim, v);
                     }};
}

}  // namespace cmilab
