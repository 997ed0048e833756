#pragma once

#include "cmilab/qmat.hpp"
#include "cmilab/rng.hpp"

namespace cmilab {

Matrix ginibre(std::size_t rows, std::size_t cols, Rng& rng);
Matrix random_unitary(std::size_t dim, Rng& rng);  // Haar
Vector random_pure_state(std::size_t dim, Rng& rng);
// rank 0 means full rank
Matrix random_density_matrix(std::size_t dim, Rng& rng, std::size_t rank = 0);
std::vector<double> random_distribution(std::size_t size, Rng& rng);

}  // namespace cmilab
