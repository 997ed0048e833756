#include "cmilab/oraclesim.hpp"

#include <bit>
#include <cmath>

#include "index_util.hpp"

namespace cmilab {

OracleFunction::OracleFunction(int n, std::vector<std::uint8_t> table) : n_(n), table_(std::move(table)) {
  if (n < 0 || n > 20) throw ValidationError("oracle input length must be in [0, 20]");
  if (table_.size() != (std::size_t{1} << n)) throw ValidationError("oracle table size must be 2^n");
  for (auto b : table_)
    if (b > 1) throw ValidationError("oracle table entries must be bits");
}

OracleFunction OracleFunction::from_index(int n, std::uint64_t index) {
  if (n < 0 || n > 6) throw ValidationError("from_index requires 2^n <= 64");
  const std::size_t size = std::size_t{1} << n;
  if (size < 64 && (index >> size) != 0) throw ValidationError("oracle index out of range");
  std::vector<std::uint8_t> t(size);
  for (std::size_t x = 0; x < size; ++x) t[x] = (index >> x) & 1;
  return OracleFunction(n, std::move(t));
}

int OracleFunction::operator()(std::uint64_t x) const {
  if (x >= table_.size()) throw ValidationError("oracle input out of range");
  return table_[x];
}

std::uint64_t OracleFunction::index() const {
  if (table_.size() > 64) throw ValidationError("oracle index requires 2^n <= 64");
  std::uint64_t idx = 0;
  for (std::size_t x = 0; x < table_.size(); ++x) idx |= std::uint64_t{table_[x]} << x;
  return idx;
}

std::string OracleFunction::hex() const {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (std::size_t k = 0; k * 4 < table_.size(); ++k) {
    int v = 0;
    for (std::size_t b = 0; b < 4 && 4 * k + b < table_.size(); ++b) v |= table_[4 * k + b] << b;
    out.push_back(digits[v]);
  }
  return out;
}

nlohmann::ordered_json OracleFunction::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n_;
  j["table"] = hex();
  return j;
}

OracleFunction OracleFunction::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("n") || !j.contains("table")) throw ValidationError("oracle JSON needs n and table");
  const int n = j.at("n").get<int>();
  const std::string hex = j.at("table").get<std::string>();
  if (n < 0 || n > 20) throw ValidationError("oracle input length must be in [0, 20]");
  const std::size_t size = std::size_t{1} << n;
  if (hex.size() != (size + 3) / 4) throw ValidationError("oracle table hex has the wrong length");
  std::vector<std::uint8_t> t(size);
  for (std::size_t k = 0; k < hex.size(); ++k) {
    const char c = hex[k];
    int v;
    if (c >= '0' && c <= '9') v = c - '0';
    else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
    else throw ValidationError("oracle table is not lowercase hex");
    for (std::size_t b = 0; b < 4; ++b) {
      if (4 * k + b < size) t[4 * k + b] = (v >> b) & 1;
      else if ((v >> b) & 1) throw ValidationError("oracle table hex has stray high bits");
    }
  }
  return OracleFunction(n, std::move(t));
}

OracleFunction sample_oracle(int n, std::uint64_t seed) {
  if (n < 0 || n > 20) throw ValidationError("oracle input length must be in [0, 20]");
  Rng rng(seed);
  std::vector<std::uint8_t> t(std::size_t{1} << n);
  for (auto& b : t) b = static_cast<std::uint8_t>(rng.below(2));
  return OracleFunction(n, std::move(t));
}

std::vector<OracleFunction> enumerate_oracles(int n) {
  if (n < 0 || n > 3) throw CapError("oracle enumeration is limited to n <= 3");
  const std::uint64_t count = std::uint64_t{1} << (std::uint64_t{1} << n);
  std::vector<OracleFunction> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(OracleFunction::from_index(n, i));
  return out;
}

// ---------------------------------------------------------------- records

void QueryRecord::add(std::uint64_t x, int value) {
  if (value != 0 && value != 1) throw ValidationError("oracle values are bits");
  auto [it, fresh] = entries_.emplace(x, value);
  if (!fresh && it->second != value)
    throw ConflictError("query record already maps " + std::to_string(x) + " to " + std::to_string(it->second));
}

int QueryRecord::value(std::uint64_t x) const {
  auto it = entries_.find(x);
  if (it == entries_.end()) throw ValidationError("input not in the query record");
  return it->second;
}

std::vector<std::uint64_t> QueryRecord::inputs() const {
  std::vector<std::uint64_t> out;
  for (const auto& [x, v] : entries_) out.push_back(x);
  return out;
}

bool QueryRecord::consistent_with(const OracleFunction& h) const {
  for (const auto& [x, v] : entries_)
    if (x >= h.domain_size() || h(x) != v) return false;
  return true;
}

OracleFunction reprogram_oracle(const OracleFunction& h, const QueryRecord& record) {
  auto t = h.table();
  for (const auto& [x, v] : record.entries()) {
    if (x >= t.size()) throw ValidationError("record input outside the oracle domain");
    t[x] = static_cast<std::uint8_t>(v);
  }
  return OracleFunction(h.n(), std::move(t));
}

std::string to_string(QueryMode m) {
  switch (m) {
    case QueryMode::phase: return "phase";
    case QueryMode::xor_out: return "xor";
    case QueryMode::classical: return "classical";
  }
  return "?";
}

QueryMode query_mode_from_string(const std::string& s) {
  if (s == "phase") return QueryMode::phase;
  if (s == "xor") return QueryMode::xor_out;
  if (s == "classical") return QueryMode::classical;
  throw ValidationError("unknown query mode '" + s + "'");
}

// ---------------------------------------------------------------- purified oracle

const SystemLayout& PurifiedOracleState::layout() const {
  if (auto p = std::get_if<PureState>(&state)) return p->layout;
  return std::get<DensityMatrix>(state).layout();
}

DensityMatrix PurifiedOracleState::density() const {
  if (auto p = std::get_if<PureState>(&state)) return DensityMatrix::from_pure(p->layout, p->amplitudes);
  return std::get<DensityMatrix>(state);
}

PurifiedOracleState init_purified_oracle(int n, const SystemLayout& registers, const std::string& function_label) {
  if (n < 0 || n > 3) throw CapError("purified oracle simulation is limited to n <= 3");
  const std::size_t fdim = std::size_t{1} << (std::size_t{1} << n);
  auto layout = registers.concat(SystemLayout({{function_label, fdim}}));
  Vector psi = Vector::Zero(static_cast<Eigen::Index>(layout.total_dim()));
  const double amp = 1 / std::sqrt(static_cast<double>(fdim));
  for (std::size_t h = 0; h < fdim; ++h) psi[static_cast<Eigen::Index>(h)] = amp;
  PurifiedOracleState s;
  s.n = n;
  s.function_label = function_label;
  s.state = PureState{std::move(layout), std::move(psi)};
  return s;
}

namespace {

struct QueryGeometry {
  std::vector<std::size_t> strides;
  std::size_t in_pos, out_pos, f_pos;
  std::size_t domain;
};

QueryGeometry geometry(const PurifiedOracleState& s, const std::string& input, const std::string& output) {
  const auto& l = s.layout();
  QueryGeometry g;
  g.strides = l.strides();
  g.in_pos = l.position(input);
  g.out_pos = l.position(output);
  g.f_pos = l.position(s.function_label);
  g.domain = std::size_t{1} << s.n;
  if (l[g.in_pos].dim != g.domain) throw LayoutError("query input register must have dimension 2^n");
  if (l[g.out_pos].dim != 2) throw LayoutError("query output register must be a qubit");
  if (g.in_pos == g.out_pos || g.in_pos == g.f_pos || g.out_pos == g.f_pos)
    throw LayoutError("query registers must be distinct");
  return g;
}

// Basis map of the query: index -> (image index, sign).
void query_map(const PurifiedOracleState& s, const QueryGeometry& g, QueryMode mode, std::vector<std::size_t>& image,
               std::vector<double>& sign) {
  const auto& l = s.layout();
  const auto d = l.total_dim();
  image.resize(d);
  sign.assign(d, 1.0);
  const std::size_t din = l[g.in_pos].dim, dout = 2, df = l[g.f_pos].dim;
  for (std::size_t i = 0; i < d; ++i) {
    const auto x = (i / g.strides[g.in_pos]) % din;
    const auto y = (i / g.strides[g.out_pos]) % dout;
    const auto h = (i / g.strides[g.f_pos]) % df;
    const auto hx = (h >> x) & 1;
    if (mode == QueryMode::phase) {
      image[i] = i;
      if (y & hx) sign[i] = -1.0;
    } else {
      image[i] = hx ? (y ? i - g.strides[g.out_pos] : i + g.strides[g.out_pos]) : i;
    }
  }
}

Matrix dephase(const Matrix& rho, const SystemLayout& layout, const std::string& label) {
  const auto strides = layout.strides();
  const auto p = layout.position(label);
  const auto dim = layout[p].dim;
  Matrix out = rho;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      if ((static_cast<std::size_t>(i) / strides[p]) % dim != (static_cast<std::size_t>(j) / strides[p]) % dim)
        out(i, j) = 0;
  return out;
}

}  // namespace

PurifiedOracleState apply_query(const PurifiedOracleState& s, QueryMode mode, const std::string& input,
                                const std::string& output) {
  const auto g = geometry(s, input, output);
  PurifiedOracleState out = s;
  if (mode == QueryMode::classical) {
    const Matrix reduced = s.is_pure()
                               ? reduced_from_pure(std::get<PureState>(s.state).amplitudes, s.layout(), {input})
                               : partial_trace(std::get<DensityMatrix>(s.state).matrix(), s.layout(), {input});
    Matrix off = reduced;
    off.diagonal().setZero();
    if (off.cwiseAbs().maxCoeff() > 1e-9)
      throw ModeError("classical query on an input register that is not diagonal");
    const DensityMatrix rho = s.density();
    out.state = DensityMatrix(rho.layout(), dephase(rho.matrix(), rho.layout(), input), false);
  }
  std::vector<std::size_t> image;
  std::vector<double> sign;
  query_map(out, g, mode == QueryMode::phase ? QueryMode::phase : QueryMode::xor_out, image, sign);
  if (auto p = std::get_if<PureState>(&out.state)) {
    Vector next(p->amplitudes.size());
    for (std::size_t i = 0; i < image.size(); ++i) next[image[i]] = sign[i] * p->amplitudes[i];
    p->amplitudes = std::move(next);
  } else {
    const auto& rho = std::get<DensityMatrix>(out.state);
    Matrix next(rho.matrix().rows(), rho.matrix().cols());
    for (std::size_t i = 0; i < image.size(); ++i)
      for (std::size_t j = 0; j < image.size(); ++j) next(image[i], image[j]) = sign[i] * sign[j] * rho.matrix()(i, j);
    out.state = DensityMatrix(rho.layout(), std::move(next), false);
  }
  return out;
}

PurifiedOracleState measure_register(const PurifiedOracleState& s, const std::string& label) {
  const DensityMatrix rho = s.density();
  PurifiedOracleState out = s;
  out.state = DensityMatrix(rho.layout(), dephase(rho.matrix(), rho.layout(), label), false);
  return out;
}

PurifiedOracleState apply_gate(const PurifiedOracleState& s, const Labels& targets, const Matrix& u) {
  for (const auto& t : targets)
    if (t == s.function_label) throw LayoutError("gates may not act on the function register");
  PurifiedOracleState out = s;
  if (auto p = std::get_if<PureState>(&out.state)) {
    apply_local(p->amplitudes, p->layout, targets, u);
  } else {
    const auto& rho = std::get<DensityMatrix>(out.state);
    out.state = DensityMatrix(rho.layout(), apply_local(rho.matrix(), rho.layout(), targets, u), false);
  }
  return out;
}

void walsh_hadamard(Vector& v) {
  const auto n = static_cast<std::size_t>(v.size());
  if (n == 0 || (n & (n - 1))) throw ValidationError("Walsh-Hadamard length must be a power of two");
  for (std::size_t h = 1; h < n; h <<= 1)
    for (std::size_t i = 0; i < n; i += h << 1)
      for (std::size_t j = i; j < i + h; ++j) {
        const Complex a = v[j], b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
  v /= std::sqrt(static_cast<double>(n));
}

std::map<std::uint64_t, Vector> fourier_components(const PurifiedOracleState& s) {
  if (!s.is_pure()) throw ModeError("Fourier components need a pure purified state");
  const auto& ps = std::get<PureState>(s.state);
  const auto split = detail::split_index(ps.layout, {s.function_label});
  const auto df = split.target_offsets.size();
  const auto dr = split.rest_offsets.size();
  std::vector<Vector> by_d(df, Vector::Zero(static_cast<Eigen::Index>(dr)));
  Vector col(static_cast<Eigen::Index>(df));
  for (std::size_t r = 0; r < dr; ++r) {
    for (std::size_t h = 0; h < df; ++h) col[h] = ps.amplitudes[split.rest_offsets[r] + split.target_offsets[h]];
    walsh_hadamard(col);
    for (std::size_t d = 0; d < df; ++d) by_d[d][r] = col[d];
  }
  std::map<std::uint64_t, Vector> out;
  for (std::size_t d = 0; d < df; ++d) out.emplace(d, std::move(by_d[d]));
  return out;
}

std::map<int, double> fourier_support_weights(const PurifiedOracleState& s) {
  std::map<int, double> out;
  const auto split = detail::split_index(s.layout(), {s.function_label});
  const auto df = split.target_offsets.size();
  const int weights = static_cast<int>(std::bit_width(df - 1));
  for (int w = 0; w <= weights; ++w) out[w] = 0;
  if (s.is_pure()) {
    for (const auto& [d, v] : fourier_components(s)) out[std::popcount(d)] += v.squaredNorm();
    return out;
  }
  const auto& rho = std::get<DensityMatrix>(s.state).matrix();
  Matrix block(static_cast<Eigen::Index>(df), static_cast<Eigen::Index>(df));
  for (auto r : split.rest_offsets) {
    for (std::size_t i = 0; i < df; ++i)
      for (std::size_t j = 0; j < df; ++j) block(i, j) = rho(r + split.target_offsets[i], r + split.target_offsets[j]);
    for (Eigen::Index j = 0; j < block.cols(); ++j) {
      Vector c = block.col(j);
      walsh_hadamard(c);
      block.col(j) = c;
    }
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      Vector r2 = block.row(i).transpose();
      walsh_hadamard(r2);
      block.row(i) = r2.transpose();
    }
    for (std::size_t d = 0; d < df; ++d) out[std::popcount(d)] += block(d, d).real();
  }
  return out;
}

}  // namespace cmilab
