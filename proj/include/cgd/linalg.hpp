#pragma once

// Dense layer math for fully connected nets: forward pass, mean loss, and
// mini-batch gradients via backprop. Row-major throughout; one sample per
// row, so a batch is (n x d) and layer r maps (.. x in_r) to (.. x out_r)
// by right-multiplication. No bias terms.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace cgd {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { Identity, ReLU, Softmax };

enum class LossKind { CrossEntropySoftmax, MeanSquaredError };

Matrix relu(const Matrix& z);

// Row-wise softmax with the usual max shift.
Matrix softmax_rows(const Matrix& z);

Matrix apply_activation(const Matrix& z, Activation act);

// ReLU on every hidden layer; the output activation follows the loss
// (softmax for cross-entropy, identity for squared error).
std::vector<Activation> activations_for(size_t depth, LossKind loss);

struct ForwardPass {
    std::vector<Matrix> z;  // pre-activation per layer
    std::vector<Matrix> a;  // post-activation per layer; a.back() is the prediction
};

ForwardPass forward_fc(const Matrix& input, const std::vector<Matrix>& layers,
                       const std::vector<Activation>& acts);

// Mean loss over rows. `pred` is the final post-activation output: class
// probabilities for cross-entropy (floored at 1e-12 inside the log), raw
// values for squared error, where the convention is (1/2n)*||pred - y||^2.
double loss_value(const Matrix& pred, const Matrix& y, LossKind loss);

// Optional L2 hook: lambda * sum of squared entries over all layers.
double l2_penalty(const std::vector<Matrix>& layers, double lambda);

// (1/n) * dF/dW per layer for the batch (x, y), activations as in
// activations_for. lambda adds the 2*lambda*W term of the L2 hook. When
// loss_out is given it receives the batch loss from the same forward pass.
std::vector<Matrix> local_gradient(const Matrix& x, const Matrix& y,
                                   const std::vector<Matrix>& layers, LossKind loss,
                                   double lambda = 0.0, double* loss_out = nullptr);

// Backward half of local_gradient for callers that already hold the forward
// pass. fp must come from forward_fc over the same x and layers with the
// loss-canonical activations; the output delta is then (pred - y)/n for
// either loss.
std::vector<Matrix> backward_from(const ForwardPass& fp, const Matrix& x, const Matrix& y,
                                  const std::vector<Matrix>& layers, double lambda = 0.0);

// Fraction of rows whose argmax matches the one-hot target's.
double accuracy(const Matrix& pred, const Matrix& y);

}  // namespace cgd
