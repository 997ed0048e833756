#include "cmilab/recovery.hpp"

#include <algorithm>
#include <cmath>

namespace cmilab {

namespace {

Complex complex_power(double lambda, Complex exponent) { return std::exp(exponent * std::log(lambda)); }

}  // namespace

Matrix RecoveryChannel::apply(const Matrix& rho_e) const {
  const auto dout = static_cast<Eigen::Index>(output_layout.total_dim());
  Matrix out = Matrix::Zero(dout, dout);
  for (const auto& k : kraus) out.noalias() += k * rho_e * k.adjoint();
  for (const auto& k : dump) out.noalias() += k * rho_e * k.adjoint();
  return out;
}

double RecoveryChannel::kernel_weight(const Matrix& rho_e) const {
  double w = 0;
  for (const auto& k : dump) w += (k * rho_e * k.adjoint()).trace().real();
  return w;
}

Matrix RecoveryChannel::completeness() const {
  const auto din = static_cast<Eigen::Index>(input_layout.total_dim());
  Matrix c = Matrix::Zero(din, din);
  for (const auto& k : kraus) c += k.adjoint() * k;
  for (const auto& k : dump) c += k.adjoint() * k;
  return c;
}

RecoveryChannel rotated_petz(const DensityMatrix& rho_eb, const Labels& e_labels, const Labels& b_labels, double s,
                             const std::string& suffix) {
  Labels order = e_labels;
  order.insert(order.end(), b_labels.begin(), b_labels.end());
  if (order.size() != rho_eb.layout().size()) throw LayoutError("rho_EB must consist of exactly the E and B factors");
  const DensityMatrix eb = permute_factors(rho_eb, order);
  const Matrix rho_e = partial_trace(eb.matrix(), eb.layout(), e_labels);

  RecoveryChannel ch;
  ch.rotation = s;
  ch.input_layout = eb.layout().subset(e_labels).reordered(e_labels);
  ch.output_layout = ch.input_layout.concat(eb.layout().reordered(b_labels).renamed([&](const std::string& l) {
    return l + suffix;
  }));
  const auto de = static_cast<Eigen::Index>(ch.input_layout.total_dim());
  const auto db = static_cast<Eigen::Index>(eb.dim()) / de;

  const double top_eb = hermitian_eig(eb.matrix()).eigenvalues[0];
  const double top_e = hermitian_eig(rho_e).eigenvalues[0];
  const Complex half_plus(0.5, 0.5 * s);
  const Matrix p = matrix_apply_spectral(
      eb.matrix(), [&](double x) { return x > 0 ? complex_power(x, half_plus) : Complex(0); }, NullPolicy::project,
      1e-13 * top_eb);
  const Matrix m = matrix_apply_spectral(
      rho_e, [&](double x) { return complex_power(x, -half_plus); }, NullPolicy::project, 1e-12 * top_e);

  for (Eigen::Index j = 0; j < db; ++j) {
    // (M tensor |j>) has rows (e, b) and is nonzero only for b == j
    Matrix mj = Matrix::Zero(de * db, de);
    for (Eigen::Index e = 0; e < de; ++e) mj.row(e * db + j) = m.row(e);
    ch.kraus.push_back(p * mj);
  }

  // kernel of rho_E -> sink
  const auto eig = hermitian_eig(rho_e);
  for (Eigen::Index i = 0; i < de; ++i) {
    if (eig.eigenvalues[i] > 1e-12 * top_e) continue;
    Matrix k = Matrix::Zero(de * db, de);
    k.row(0) = eig.eigenvectors.col(i).adjoint();
    ch.dump.push_back(std::move(k));
  }
  return ch;
}

DensityMatrix apply_recovery(const RecoveryChannel& ch, const DensityMatrix& rho, const Labels& e_labels,
                             bool strict_support) {
  if (e_labels != ch.input_layout.labels()) throw LayoutError("E labels do not match the channel input layout");
  const auto& layout = rho.layout();
  for (const auto& l : e_labels)
    if (layout.dim_of(l) != ch.input_layout.dim_of(l)) throw LayoutError("E factor '" + l + "' has the wrong dimension");
  Labels others;
  for (const auto& l : layout.labels())
    if (std::find(e_labels.begin(), e_labels.end(), l) == e_labels.end()) others.push_back(l);
  Labels order = others;
  order.insert(order.end(), e_labels.begin(), e_labels.end());
  const DensityMatrix r = permute_factors(rho, order);
  const auto de = static_cast<Eigen::Index>(ch.input_layout.total_dim());
  const auto dout = static_cast<Eigen::Index>(ch.output_layout.total_dim());
  const auto d_other = static_cast<Eigen::Index>(r.dim()) / de;

  if (strict_support) {
    const Matrix rho_e = partial_trace(r.matrix(), r.layout(), e_labels);
    const double w = ch.kernel_weight(rho_e);
    if (w > 1e-8) throw SupportError("input has weight " + std::to_string(w) + " outside supp(rho_E)");
  }

  Matrix out = Matrix::Zero(d_other * dout, d_other * dout);
  for (Eigen::Index a = 0; a < d_other; ++a)
    for (Eigen::Index b = 0; b < d_other; ++b) {
      const Matrix blk = r.matrix().block(a * de, b * de, de, de);
      if (blk.cwiseAbs().maxCoeff() == 0) continue;
      out.block(a * dout, b * dout, dout, dout) = ch.apply(blk);
    }
  SystemLayout out_layout = r.layout().subset(others).reordered(others).concat(ch.output_layout);
  return DensityMatrix(std::move(out_layout), std::move(out), false);
}

std::vector<double> default_rotation_grid() {
  std::vector<double> g;
  for (int i = -20; i <= 20; ++i) g.push_back(0.25 * i);
  return g;
}

double fawzi_renner_bound(double cmi_bits) { return std::sqrt(std::log(2.0) * std::max(cmi_bits, 0.0)); }

RecoveryResult best_recovery(const DensityMatrix& rho_aeb, const Labels& a_labels, const Labels& e_labels,
                             const Labels& b_labels, const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("rotation grid is empty");
  Labels order = a_labels;
  order.insert(order.end(), e_labels.begin(), e_labels.end());
  order.insert(order.end(), b_labels.begin(), b_labels.end());
  const DensityMatrix target = permute_factors(rho_aeb, order);
  Labels eb = e_labels;
  eb.insert(eb.end(), b_labels.begin(), b_labels.end());
  Labels ae = a_labels;
  ae.insert(ae.end(), e_labels.begin(), e_labels.end());
  const DensityMatrix rho_eb = permute_factors(partial_trace(target, eb), eb);
  const DensityMatrix rho_ae = permute_factors(partial_trace(target, ae), ae);

  RecoveryResult res;
  res.cmi = conditional_mutual_information(target, a_labels, b_labels, e_labels).value;
  res.fr_bound = fawzi_renner_bound(res.cmi);
  bool first = true;
  for (double s : grid) {
    auto ch = rotated_petz(rho_eb, e_labels, b_labels, s);
    const DensityMatrix sigma = apply_recovery(ch, rho_ae, e_labels);
    const double td = trace_distance(sigma.matrix(), target.matrix());
    res.grid_td.emplace_back(s, td);
    if (first || td < res.achieved_td - 1e-15) {
      res.achieved_td = td;
      res.rotation = s;
      res.channel = std::move(ch);
      first = false;
    }
  }
  return res;
}

}  // namespace cmilab
