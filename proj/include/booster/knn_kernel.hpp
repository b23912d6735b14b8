#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace booster::kernel {

// Squared Euclidean distances from `query` to each of the `n` rows of the
// row-major `data` matrix (`dim` columns). Both variants accumulate each row
// in the same order, so their outputs are bit-identical.
void squared_distances_serial(const double* data, std::size_t n, std::size_t dim, const double* query, double* out);
void squared_distances_parallel(const double* data, std::size_t n, std::size_t dim, const double* query, double* out);

struct Hit {
    std::size_t row;
    double distance;
};

// The `k` nearest rows by (distance, ids[row]).
std::vector<Hit> top_k(const std::vector<double>& sq_distances, const std::vector<std::string>& ids, std::size_t k);

}  // namespace booster::kernel
