#include "booster/knn_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace booster::kernel {

namespace {

inline double row_distance(const double* row, std::size_t dim, const double* query) {
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        double d = row[j] - query[j];
        acc += d * d;
    }
    return acc;
}

}  // namespace

void squared_distances_serial(const double* data, std::size_t n, std::size_t dim, const double* query, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = row_distance(data + i * dim, dim, query);
}

void squared_distances_parallel(const double* data, std::size_t n, std::size_t dim, const double* query,
                                double* out) {
    const auto rows = static_cast<long long>(n);
#pragma omp parallel for schedule(static) if (rows * static_cast<long long>(dim) > 16384)
    for (long long i = 0; i < rows; ++i)
        out[i] = row_distance(data + static_cast<std::size_t>(i) * dim, dim, query);
}

std::vector<Hit> top_k(const std::vector<double>& sq, const std::vector<std::string>& ids, std::size_t k) {
    std::vector<std::size_t> order(sq.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    k = std::min(k, order.size());
    auto less = [&](std::size_t a, std::size_t b) {
        if (sq[a] != sq[b]) return sq[a] < sq[b];
        return ids[a] < ids[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), less);
    std::vector<Hit> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back({order[i], std::sqrt(sq[order[i]])});
    return out;
}

}  // namespace booster::kernel
