#pragma once

// Internal engine behind zrl/policy.hpp. Activations are row-major matrices
// with one row per sequence position.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "zrl/policy.hpp"

namespace zrl::detail {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

struct LayerOffsets {
    std::size_t ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct Layout {
    int vocab = 0;
    int width = 0;
    int heads = 0;
    int mlp = 0;
    int context = 0;
    std::size_t tok_emb = 0, pos_emb = 0, lnf_g = 0, lnf_b = 0, out_bias = 0, total = 0;
    std::vector<LayerOffsets> layers;

    explicit Layout(const ModelConfig& cfg);
};

// Keys and values of every processed position, per layer.
struct KvCache {
    int rows = 0;
    std::vector<AlignedDoubles> k;
    std::vector<AlignedDoubles> v;

    KvCache(int layers, int width, int reserve_rows);
    void truncate(int new_rows, int width);
};

// Gradients w.r.t. cached keys/values, indexed by absolute cache row.
struct KvGrad {
    std::vector<Mat> dk;
    std::vector<Mat> dv;

    KvGrad(int layers, int rows, int width);
};

struct LayerActs {
    Mat x_in;
    Mat xhat1;
    Vec rstd1;
    Mat a;
    Mat q, k, v;
    std::vector<Mat> probs;  // per head, T x (S+T)
    Mat ctx;
    Mat x_mid;
    Mat xhat2;
    Vec rstd2;
    Mat m;
    Mat u;
    Mat g;
};

struct SegmentActs {
    int cache_rows_before = 0;
    int first_pos = 0;
    std::vector<Token> tokens;
    std::vector<LayerActs> layers;
    Mat xhat_f;
    Vec rstd_f;
};

class Transformer {
public:
    explicit Transformer(const ModelConfig& cfg);

    [[nodiscard]] const Layout& layout() const { return layout_; }
    [[nodiscard]] const ModelConfig& config() const { return cfg_; }

    // Runs `tokens` (absolute positions first_pos, first_pos+1, ...) through the
    // stack, appending their keys/values to `cache`. `f` receives the final
    // normalized hidden states. Activations are kept when `acts` is non-null.
    void forward(const double* p, std::span<const Token> tokens, int first_pos, KvCache& cache, SegmentActs* acts,
                 Mat& f) const;

    // z = f * E[support]^T + bias[support]
    void logits(const double* p, const Mat& f, std::span<const Token> support, Mat& z) const;
    void logits_backward(const double* p, const Mat& f, std::span<const Token> support, const Mat& dz, Mat& df,
                         double* grad) const;

    // Backpropagates `df` through a segment. Gradients for positions cached
    // before the segment are added to `dkv`; gradients already present in
    // `dkv` for the segment's own rows are consumed as extra upstream terms.
    void backward(const double* p, const SegmentActs& acts, const KvCache& cache, const Mat& df, KvGrad& dkv,
                  double* grad) const;

private:
    ModelConfig cfg_;
    Layout layout_;
};

// Row-wise log-softmax.
Mat log_softmax_rows(const Mat& z);

}  // namespace zrl::detail
