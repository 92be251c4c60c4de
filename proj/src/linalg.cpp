#include "cgd/linalg.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cgd {

namespace {

void check_chain(Eigen::Index input_cols, const std::vector<Matrix>& layers) {
    if (layers.empty()) throw std::invalid_argument("no layers");
    if (input_cols != layers[0].rows())
        throw std::invalid_argument("input has " + std::to_string(input_cols) +
                                    " features, first layer expects " +
                                    std::to_string(layers[0].rows()));
    for (size_t r = 0; r + 1 < layers.size(); ++r)
        if (layers[r].cols() != layers[r + 1].rows())
            throw std::invalid_argument("layer " + std::to_string(r) + " outputs " +
                                        std::to_string(layers[r].cols()) + ", layer " +
                                        std::to_string(r + 1) + " expects " +
                                        std::to_string(layers[r + 1].rows()));
}

}  // namespace

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

Matrix softmax_rows(const Matrix& z) {
    Matrix out = z;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        row = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
    }
    return out;
}

Matrix apply_activation(const Matrix& z, Activation act) {
    switch (act) {
        case Activation::Identity: return z;
        case Activation::ReLU: return relu(z);
        case Activation::Softmax: return softmax_rows(z);
    }
    throw std::invalid_argument("unknown activation");
}

std::vector<Activation> activations_for(size_t depth, LossKind loss) {
    std::vector<Activation> acts(depth, Activation::ReLU);
    acts.back() = loss == LossKind::CrossEntropySoftmax ? Activation::Softmax
                                                        : Activation::Identity;
    return acts;
}

ForwardPass forward_fc(const Matrix& input, const std::vector<Matrix>& layers,
                       const std::vector<Activation>& acts) {
    check_chain(input.cols(), layers);
    if (acts.size() != layers.size())
        throw std::invalid_argument("one activation per layer required");
    ForwardPass fp;
    fp.z.reserve(layers.size());
    fp.a.reserve(layers.size());
    const Matrix* cur = &input;
    for (size_t r = 0; r < layers.size(); ++r) {
        fp.z.push_back(*cur * layers[r]);
        fp.a.push_back(apply_activation(fp.z.back(), acts[r]));
        cur = &fp.a.back();
    }
    return fp;
}

double loss_value(const Matrix& pred, const Matrix& y, LossKind loss) {
    if (pred.rows() != y.rows() || pred.cols() != y.cols())
        throw std::invalid_argument("prediction/target shape mismatch");
    if (pred.rows() == 0) throw std::invalid_argument("empty batch");
    double n = double(pred.rows());
    if (loss == LossKind::MeanSquaredError) return (pred - y).squaredNorm() / (2.0 * n);
    return -(y.array() * (pred.array() + 1e-12).log()).sum() / n;
}

double l2_penalty(const std::vector<Matrix>& layers, double lambda) {
    if (lambda == 0.0) return 0.0;
    double s = 0.0;
    for (const Matrix& w : layers) s += w.squaredNorm();
    return lambda * s;
}

std::vector<Matrix> local_gradient(const Matrix& x, const Matrix& y,
                                   const std::vector<Matrix>& layers, LossKind loss,
                                   double lambda, double* loss_out) {
    if (x.rows() == 0) throw std::invalid_argument("empty batch");
    if (x.rows() != y.rows()) throw std::invalid_argument("batch/target row mismatch");
    check_chain(x.cols(), layers);
    if (y.cols() != layers.back().cols())
        throw std::invalid_argument("target width does not match output layer");

    ForwardPass fp = forward_fc(x, layers, activations_for(layers.size(), loss));
    if (loss_out) *loss_out = loss_value(fp.a.back(), y, loss) + l2_penalty(layers, lambda);
    return backward_from(fp, x, y, layers, lambda);
}

std::vector<Matrix> backward_from(const ForwardPass& fp, const Matrix& x, const Matrix& y,
                                  const std::vector<Matrix>& layers, double lambda) {
    double n = double(x.rows());

    // Both losses pair with their canonical output activation, so the output
    // delta collapses to (prediction - target) / n either way.
    Matrix delta = (fp.a.back() - y) / n;

    std::vector<Matrix> grads(layers.size());
    for (size_t r = layers.size(); r-- > 0;) {
        const Matrix& below = r == 0 ? x : fp.a[r - 1];
        grads[r] = below.transpose() * delta;
        if (lambda != 0.0) grads[r] += 2.0 * lambda * layers[r];
        if (r > 0) {
            delta = delta * layers[r].transpose();
            delta = (fp.z[r - 1].array() > 0.0).select(delta, 0.0);
        }
    }
    return grads;
}

double accuracy(const Matrix& pred, const Matrix& y) {
    if (pred.rows() != y.rows() || pred.cols() != y.cols())
        throw std::invalid_argument("prediction/target shape mismatch");
    if (pred.rows() == 0) throw std::invalid_argument("empty batch");
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
        Eigen::Index pi, yi;
        pred.row(i).maxCoeff(&pi);
        y.row(i).maxCoeff(&yi);
        if (pi == yi) ++hits;
    }
    return double(hits) / double(pred.rows());
}

}  // namespace cgd
