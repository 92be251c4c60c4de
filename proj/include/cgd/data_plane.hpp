#pragma once

// Dataset ingestion and grid partitioning. A partition plan splits samples
// into m_h contiguous row ranges and features into m_v contiguous column
// ranges; shard (i,j) owns the intersection and carries the labels of row
// slice i (every vertical peer sees the labels of its rows).

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgd/linalg.hpp"

namespace cgd {

class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Dataset {
    Matrix x;  // n x d, pixels scaled to [0,1] for image data
    Matrix y;  // n x classes one-hot, or n x 1 for regression
    std::string name;

    Eigen::Index n() const { return x.rows(); }
    Eigen::Index d() const { return x.cols(); }
};

// IDX pair (big-endian headers, unsigned byte payload). Labels become
// one-hot rows over 10 classes.
Dataset load_mnist(const std::string& images_path, const std::string& labels_path);

struct SyntheticLinreg {
    Dataset data;
    Matrix w_true;  // d x 1
    Matrix w_star;  // d x 1, normal-equation solution
    double f_star;  // mean squared-error loss at w_star
};

// x ~ N(0,1), y = x*w_true + noise_sd*N(0,1). Retries with a fresh seed if
// x^T x comes out singular (vanishingly unlikely), failing after 3 attempts.
SyntheticLinreg synthetic_linreg(Eigen::Index n, Eigen::Index d, double noise_sd, uint64_t seed);

struct RowRange {
    Eigen::Index begin = 0;  // half-open [begin, end)
    Eigen::Index end = 0;

    Eigen::Index size() const { return end - begin; }
    bool operator==(const RowRange&) const = default;
};

struct PartitionPlan {
    size_t m_h = 1;
    size_t m_v = 1;
    std::vector<RowRange> sample_ranges;   // m_h entries covering [0, n)
    std::vector<RowRange> feature_ranges;  // m_v entries covering [0, d)
};

// Even split with remainders going to the earliest ranges, so every range is
// nonempty. Requires m_h <= n and m_v <= d.
PartitionPlan make_partition(Eigen::Index n, Eigen::Index d, size_t m_h, size_t m_v);

struct Shard {
    Matrix x;  // sample_ranges[i] rows of feature_ranges[j] columns
    Matrix y;  // labels of sample_ranges[i], replicated across j
};

// shards[i][j], i horizontal, j vertical. Throws if the plan does not cover
// the dataset exactly.
std::vector<std::vector<Shard>> apply_partition(const Dataset& ds, const PartitionPlan& plan);

// Row permutation applied to x and y together.
Dataset shuffle_rows(const Dataset& ds, uint64_t seed);

Dataset head(const Dataset& ds, Eigen::Index count);

}  // namespace cgd
