#include "cgd/data_plane.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

namespace cgd {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

uint32_t be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
    if (off + 4 > b.size()) throw DataError("truncated header in " + path);
    return uint32_t(b[off]) << 24 | uint32_t(b[off + 1]) << 16 | uint32_t(b[off + 2]) << 8 |
           uint32_t(b[off + 3]);
}

}  // namespace

Dataset load_mnist(const std::string& images_path, const std::string& labels_path) {
    std::vector<uint8_t> img = read_file(images_path);
    if (be32(img, 0, images_path) != 0x00000803u)
        throw DataError("bad magic number in " + images_path + " (expected image file)");
    uint32_t n = be32(img, 4, images_path);
    uint32_t rows = be32(img, 8, images_path);
    uint32_t cols = be32(img, 12, images_path);
    size_t pixels = size_t(n) * rows * cols;
    if (img.size() != 16 + pixels)
        throw DataError("truncated payload in " + images_path + ": header promises " +
                        std::to_string(pixels) + " pixels, file holds " +
                        std::to_string(img.size() - std::min<size_t>(img.size(), 16)));

    std::vector<uint8_t> lab = read_file(labels_path);
    if (be32(lab, 0, labels_path) != 0x00000801u)
        throw DataError("bad magic number in " + labels_path + " (expected label file)");
    uint32_t n_lab = be32(lab, 4, labels_path);
    if (lab.size() != 8 + size_t(n_lab))
        throw DataError("truncated payload in " + labels_path);
    if (n_lab != n)
        throw DataError("count mismatch: " + std::to_string(n) + " images vs " +
                        std::to_string(n_lab) + " labels");

    Dataset ds;
    ds.name = "mnist";
    Eigen::Index d = Eigen::Index(rows) * Eigen::Index(cols);
    ds.x.resize(Eigen::Index(n), d);
    ds.y = Matrix::Zero(Eigen::Index(n), 10);
    for (Eigen::Index i = 0; i < Eigen::Index(n); ++i) {
        const uint8_t* px = img.data() + 16 + size_t(i) * size_t(d);
        for (Eigen::Index j = 0; j < d; ++j) ds.x(i, j) = double(px[j]) / 255.0;
        uint8_t label = lab[8 + size_t(i)];
        if (label > 9)
            throw DataError("label out of range in " + labels_path + ": " +
                            std::to_string(int(label)));
        ds.y(i, label) = 1.0;
    }
    return ds;
}

SyntheticLinreg synthetic_linreg(Eigen::Index n, Eigen::Index d, double noise_sd, uint64_t seed) {
    if (n <= d || d < 1) throw std::invalid_argument("synthetic_linreg requires n > d >= 1");
    for (int attempt = 0; attempt < 3; ++attempt) {
        std::mt19937_64 rng(seed + uint64_t(attempt));
        std::normal_distribution<double> gauss(0.0, 1.0);

        SyntheticLinreg out;
        out.data.name = "linreg";
        out.data.x.resize(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j) out.data.x(i, j) = gauss(rng);
        out.w_true.resize(d, 1);
        for (Eigen::Index j = 0; j < d; ++j) out.w_true(j, 0) = gauss(rng);
        out.data.y = out.data.x * out.w_true;
        if (noise_sd > 0.0)
            for (Eigen::Index i = 0; i < n; ++i) out.data.y(i, 0) += noise_sd * gauss(rng);

        Matrix xtx = out.data.x.transpose() * out.data.x;
        Eigen::FullPivLU<Matrix> lu(xtx);
        if (!lu.isInvertible()) continue;
        out.w_star = lu.solve(out.data.x.transpose() * out.data.y);
        out.f_star = loss_value(out.data.x * out.w_star, out.data.y, LossKind::MeanSquaredError);
        return out;
    }
    throw DataError("synthetic_linreg: x^T x singular after 3 attempts");
}

PartitionPlan make_partition(Eigen::Index n, Eigen::Index d, size_t m_h, size_t m_v) {
    if (m_h < 1 || m_v < 1) throw std::invalid_argument("partition counts must be positive");
    if (Eigen::Index(m_h) > n || Eigen::Index(m_v) > d)
        throw std::invalid_argument("more partitions than rows/columns");

    auto split = [](Eigen::Index total, size_t parts) {
        std::vector<RowRange> ranges(parts);
        Eigen::Index base = total / Eigen::Index(parts);
        Eigen::Index extra = total % Eigen::Index(parts);
        Eigen::Index at = 0;
        for (size_t i = 0; i < parts; ++i) {
            Eigen::Index len = base + (Eigen::Index(i) < extra ? 1 : 0);
            ranges[i] = {at, at + len};
            at += len;
        }
        return ranges;
    };

    PartitionPlan plan;
    plan.m_h = m_h;
    plan.m_v = m_v;
    plan.sample_ranges = split(n, m_h);
    plan.feature_ranges = split(d, m_v);
    return plan;
}

std::vector<std::vector<Shard>> apply_partition(const Dataset& ds, const PartitionPlan& plan) {
    auto covers = [](const std::vector<RowRange>& ranges, Eigen::Index total) {
        Eigen::Index at = 0;
        for (const RowRange& r : ranges) {
            if (r.begin != at || r.end <= r.begin) return false;
            at = r.end;
        }
        return at == total;
    };
    if (plan.sample_ranges.size() != plan.m_h || plan.feature_ranges.size() != plan.m_v)
        throw std::invalid_argument("plan ranges do not match its grid shape");
    if (!covers(plan.sample_ranges, ds.n()) || !covers(plan.feature_ranges, ds.d()))
        throw std::invalid_argument("plan does not cover the dataset");

    std::vector<std::vector<Shard>> shards(plan.m_h, std::vector<Shard>(plan.m_v));
    for (size_t i = 0; i < plan.m_h; ++i) {
        const RowRange& rr = plan.sample_ranges[i];
        Matrix labels = ds.y.middleRows(rr.begin, rr.size());
        for (size_t j = 0; j < plan.m_v; ++j) {
            const RowRange& cr = plan.feature_ranges[j];
            shards[i][j].x = ds.x.block(rr.begin, cr.begin, rr.size(), cr.size());
            shards[i][j].y = labels;
        }
    }
    return shards;
}

Dataset shuffle_rows(const Dataset& ds, uint64_t seed) {
    std::vector<Eigen::Index> order(size_t(ds.n()));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    Dataset out;
    out.name = ds.name;
    out.x.resize(ds.n(), ds.d());
    out.y.resize(ds.n(), ds.y.cols());
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        out.x.row(i) = ds.x.row(order[size_t(i)]);
        out.y.row(i) = ds.y.row(order[size_t(i)]);
    }
    return out;
}

Dataset head(const Dataset& ds, Eigen::Index count) {
    if (count < 0 || count > ds.n()) throw std::invalid_argument("head: count out of range");
    Dataset out;
    out.name = ds.name;
    out.x = ds.x.topRows(count);
    out.y = ds.y.topRows(count);
    return out;
}

}  // namespace cgd
