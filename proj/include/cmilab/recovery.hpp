#pragma once

#include <utility>
#include <vector>

#include "cmilab/qentropy.hpp"
#include "cmilab/qmat.hpp"

namespace cmilab {

// CPTP map E -> E B'. `kraus` covers supp(rho_E); the `dump` operators send
// the kernel of rho_E to the fixed sink state |0><0|.
struct RecoveryChannel {
  SystemLayout input_layout;   // E factors
  SystemLayout output_layout;  // E factors followed by the B' factors
  std::vector<Matrix> kraus;
  std::vector<Matrix> dump;
  double rotation = 0;

  // rho_E -> sigma_{EB'} on raw matrices in input_layout order.
  Matrix apply(const Matrix& rho_e) const;
  // Weight of rho_E outside the support the channel was built for.
  double kernel_weight(const Matrix& rho_e) const;
  // sum_j K_j^dagger K_j over kraus and dump; identity for a CPTP map.
  Matrix completeness() const;
};

// Rotated Petz map of rho_EB at rotation s. B' factors are named label + suffix.
RecoveryChannel rotated_petz(const DensityMatrix& rho_eb, const Labels& e_labels, const Labels& b_labels, double s,
                             const std::string& suffix = "'");

// Apply the channel to the E factors of rho; the output layout is the other
// factors (original order), then E, then B'. With strict support, any weight
// outside supp(rho_E) beyond 1e-8 throws SupportError.
DensityMatrix apply_recovery(const RecoveryChannel& ch, const DensityMatrix& rho, const Labels& e_labels,
                             bool strict_support = true);

std::vector<double> default_rotation_grid();  // -5 to 5 in steps of 0.25

struct RecoveryResult {
  RecoveryChannel channel;
  double rotation = 0;
  double achieved_td = 0;
  double cmi = 0;
  double fr_bound = 0;  // sqrt(ln 2 * I(A:B|E))
  std::vector<std::pair<double, double>> grid_td;
};

// Search the grid for the rotation minimising TD(T(rho_AE), rho_AEB).
RecoveryResult best_recovery(const DensityMatrix& rho_aeb, const Labels& a_labels, const Labels& e_labels,
                             const Labels& b_labels, const std::vector<double>& grid = default_rotation_grid());

double fawzi_renner_bound(double cmi_bits);

}  // namespace cmilab
