#include "transformer.hpp"

#include <cmath>
#include <limits>

#include "zrl/errors.hpp"

namespace zrl::detail {

namespace {

using MapC = Eigen::Map<const Mat>;
using MapM = Eigen::Map<Mat>;
using VecMapC = Eigen::Map<const RowVec>;
using VecMapM = Eigen::Map<RowVec>;

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

void layer_norm(const Mat& x, const double* gain, const double* bias, int width, Mat& xhat, Vec& rstd, Mat& y) {
    const Vec mu = x.rowwise().mean();
    xhat = x.colwise() - mu;
    const Vec var = xhat.array().square().rowwise().mean();
    rstd = (var.array() + kLnEps).rsqrt();
    xhat = xhat.array().colwise() * rstd.array();
    const VecMapC g(gain, width);
    const VecMapC b(bias, width);
    y = (xhat.array().rowwise() * g.array()).rowwise() + b.array();
}

// dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
void layer_norm_backward(const Mat& dy, const Mat& xhat, const Vec& rstd, const double* gain, double* dgain,
                         double* dbias, int width, Mat& dx) {
    const VecMapC g(gain, width);
    VecMapM dg(dgain, width);
    VecMapM db(dbias, width);
    dg += (dy.array() * xhat.array()).colwise().sum().matrix();
    db += dy.colwise().sum();
    const Mat dxhat = dy.array().rowwise() * g.array();
    const Vec mean_d = dxhat.rowwise().mean();
    const Vec mean_dx = (dxhat.array() * xhat.array()).rowwise().mean();
    dx = ((dxhat.colwise() - mean_d).array() - xhat.array().colwise() * mean_dx.array()).colwise() * rstd.array();
}

}  // namespace

Layout::Layout(const ModelConfig& cfg)
    : vocab(cfg.vocab_size()), width(cfg.width), heads(cfg.heads), mlp(cfg.mlp_width), context(cfg.context_len()) {
    std::size_t off = 0;
    const auto take = [&off](std::size_t n) {
        const auto start = off;
        off += n;
        return start;
    };
    const auto d = static_cast<std::size_t>(width);
    const auto h = static_cast<std::size_t>(mlp);
    tok_emb = take(static_cast<std::size_t>(vocab) * d);
    pos_emb = take(static_cast<std::size_t>(context) * d);
    for (int l = 0; l < cfg.layers; ++l) {
        LayerOffsets lo{};
        lo.ln1_g = take(d);
        lo.ln1_b = take(d);
        lo.wq = take(d * d);
        lo.wk = take(d * d);
        lo.wv = take(d * d);
        lo.wo = take(d * d);
        lo.ln2_g = take(d);
        lo.ln2_b = take(d);
        lo.w1 = take(d * h);
        lo.b1 = take(h);
        lo.w2 = take(h * d);
        lo.b2 = take(d);
        layers.push_back(lo);
    }
    lnf_g = take(d);
    lnf_b = take(d);
    out_bias = take(static_cast<std::size_t>(vocab));
    total = off;
}

KvCache::KvCache(int layers, int width, int reserve_rows) : k(layers), v(layers) {
    for (int l = 0; l < layers; ++l) {
        k[l].reserve(static_cast<std::size_t>(reserve_rows) * width);
        v[l].reserve(static_cast<std::size_t>(reserve_rows) * width);
    }
}

void KvCache::truncate(int new_rows, int width) {
    rows = new_rows;
    for (auto& m : k) m.resize(static_cast<std::size_t>(new_rows) * width);
    for (auto& m : v) m.resize(static_cast<std::size_t>(new_rows) * width);
}

KvGrad::KvGrad(int layers, int rows, int width) {
    for (int l = 0; l < layers; ++l) {
        dk.push_back(Mat::Zero(rows, width));
        dv.push_back(Mat::Zero(rows, width));
    }
}

Mat log_softmax_rows(const Mat& z) {
    const Vec mx = z.rowwise().maxCoeff();
    Mat shifted = z.colwise() - mx;
    const Vec lse = shifted.array().exp().rowwise().sum().log();
    shifted.colwise() -= lse;
    return shifted;
}

Transformer::Transformer(const ModelConfig& cfg) : cfg_(cfg), layout_(cfg) {}

void Transformer::forward(const double* p, std::span<const Token> tokens, int first_pos, KvCache& cache,
                          SegmentActs* acts, Mat& f) const {
    const int d = layout_.width;
    const int T = static_cast<int>(tokens.size());
    const int S = cache.rows;
    const int H = layout_.heads;
    const int dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (first_pos < 0 || first_pos + T > layout_.context) {
        throw ContractError("sequence exceeds the model context (" + std::to_string(layout_.context) + " positions)");
    }

    Mat x(T, d);
    const MapC tok(p + layout_.tok_emb, layout_.vocab, d);
    const MapC pos(p + layout_.pos_emb, layout_.context, d);
    for (int i = 0; i < T; ++i) {
        if (tokens[i] < 0 || tokens[i] >= layout_.vocab) throw ContractError("token id out of range");
        x.row(i) = tok.row(tokens[i]) + pos.row(first_pos + i);
    }
    if (acts) {
        acts->cache_rows_before = S;
        acts->first_pos = first_pos;
        acts->tokens.assign(tokens.begin(), tokens.end());
        acts->layers.resize(layout_.layers.size());
    }

    Mat xhat, a, q, kk, vv, ctx, m, u, g;
    Vec rstd;
    for (std::size_t l = 0; l < layout_.layers.size(); ++l) {
        const auto& lo = layout_.layers[l];
        LayerActs* la = acts ? &acts->layers[l] : nullptr;
        if (la) la->x_in = x;

        layer_norm(x, p + lo.ln1_g, p + lo.ln1_b, d, xhat, rstd, a);
        q.noalias() = a * MapC(p + lo.wq, d, d);
        kk.noalias() = a * MapC(p + lo.wk, d, d);
        vv.noalias() = a * MapC(p + lo.wv, d, d);

        auto& kc = cache.k[l];
        auto& vc = cache.v[l];
        kc.resize(static_cast<std::size_t>(S + T) * d);
        vc.resize(static_cast<std::size_t>(S + T) * d);
        MapM(kc.data() + static_cast<std::size_t>(S) * d, T, d) = kk;
        MapM(vc.data() + static_cast<std::size_t>(S) * d, T, d) = vv;
        const MapC kall(kc.data(), S + T, d);
        const MapC vall(vc.data(), S + T, d);

        ctx.resize(T, d);
        if (la) la->probs.resize(H);
        Mat scores;
        for (int h = 0; h < H; ++h) {
            scores.noalias() = q.middleCols(h * dh, dh) * kall.middleCols(h * dh, dh).transpose();
            scores *= scale;
            for (int i = 0; i < T; ++i) {
                const int visible = S + i + 1;
                auto row = scores.row(i);
                if (visible < S + T) row.tail(S + T - visible).setConstant(-std::numeric_limits<double>::infinity());
                const double mx = row.head(visible).maxCoeff();
                row = (row.array() - mx).exp();
                row /= row.sum();
            }
            ctx.middleCols(h * dh, dh).noalias() = scores * vall.middleCols(h * dh, dh);
            if (la) la->probs[h] = scores;
        }
        Mat x_mid = x;
        x_mid.noalias() += ctx * MapC(p + lo.wo, d, d);

        if (la) {
            la->xhat1 = xhat;
            la->rstd1 = rstd;
            la->a = a;
            la->q = q;
            la->k = kk;
            la->v = vv;
            la->ctx = ctx;
            la->x_mid = x_mid;
        }

        layer_norm(x_mid, p + lo.ln2_g, p + lo.ln2_b, d, xhat, rstd, m);
        u.noalias() = m * MapC(p + lo.w1, d, layout_.mlp);
        u.rowwise() += VecMapC(p + lo.b1, layout_.mlp);
        const auto cube = u.array().cube();
        const auto th = (kGeluC * (u.array() + 0.044715 * cube)).tanh();
        g = 0.5 * u.array() * (1.0 + th);
        x = x_mid;
        x.noalias() += g * MapC(p + lo.w2, layout_.mlp, d);
        x.rowwise() += VecMapC(p + lo.b2, d);

        if (la) {
            la->xhat2 = xhat;
            la->rstd2 = rstd;
            la->m = m;
            la->u = u;
            la->g = g;
        }
    }
    cache.rows = S + T;

    layer_norm(x, p + layout_.lnf_g, p + layout_.lnf_b, d, xhat, rstd, f);
    if (acts) {
        acts->xhat_f = xhat;
        acts->rstd_f = rstd;
    }
}

void Transformer::logits(const double* p, const Mat& f, std::span<const Token> support, Mat& z) const {
    const int d = layout_.width;
    const MapC tok(p + layout_.tok_emb, layout_.vocab, d);
    const int n = static_cast<int>(support.size());
    Mat e(n, d);
    RowVec bias(n);
    for (int j = 0; j < n; ++j) {
        e.row(j) = tok.row(support[j]);
        bias(j) = p[layout_.out_bias + static_cast<std::size_t>(support[j])];
    }
    // Tied read-out scaled by 1/sqrt(width): copying a token then yields
    // O(1) logits while the embeddings stay large enough to be told apart.
    z.noalias() = (f * e.transpose()) / std::sqrt(static_cast<double>(d));
    z.rowwise() += bias;
}

void Transformer::logits_backward(const double* p, const Mat& f, std::span<const Token> support, const Mat& dz,
                                  Mat& df, double* grad) const {
    const int d = layout_.width;
    const MapC tok(p + layout_.tok_emb, layout_.vocab, d);
    MapM dtok(grad + layout_.tok_emb, layout_.vocab, d);
    const int n = static_cast<int>(support.size());
    Mat e(n, d);
    for (int j = 0; j < n; ++j) e.row(j) = tok.row(support[j]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    df.noalias() = scale * (dz * e);
    const Mat de = scale * (dz.transpose() * f);
    const RowVec db = dz.colwise().sum();
    for (int j = 0; j < n; ++j) {
        dtok.row(support[j]) += de.row(j);
        grad[layout_.out_bias + static_cast<std::size_t>(support[j])] += db(j);
    }
}

void Transformer::backward(const double* p, const SegmentActs& acts, const KvCache& cache, const Mat& df,
                           KvGrad& dkv, double* grad) const {
    const int d = layout_.width;
    const int T = static_cast<int>(acts.tokens.size());
    const int S = acts.cache_rows_before;
    const int H = layout_.heads;
    const int dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const int hm = layout_.mlp;

    Mat dx;
    layer_norm_backward(df, acts.xhat_f, acts.rstd_f, p + layout_.lnf_g, grad + layout_.lnf_g, grad + layout_.lnf_b,
                        d, dx);

    Mat dg, du, dm, dx_mid, dctx, da, tmp;
    for (int l = static_cast<int>(layout_.layers.size()) - 1; l >= 0; --l) {
        const auto& lo = layout_.layers[l];
        const auto& la = acts.layers[l];

        // MLP block: x = x_mid + gelu(m W1 + b1) W2 + b2
        MapM(grad + lo.w2, hm, d).noalias() += la.g.transpose() * dx;
        VecMapM(grad + lo.b2, d) += dx.colwise().sum();
        dg.noalias() = dx * MapC(p + lo.w2, hm, d).transpose();
        {
            const auto uu = la.u.array();
            const auto th = (kGeluC * (uu + 0.044715 * uu.cube())).tanh();
            const auto dgelu = 0.5 * (1.0 + th) + 0.5 * uu * (1.0 - th.square()) * kGeluC * (1.0 + 3.0 * 0.044715 * uu.square());
            du = dg.array() * dgelu;
        }
        MapM(grad + lo.w1, d, hm).noalias() += la.m.transpose() * du;
        VecMapM(grad + lo.b1, hm) += du.colwise().sum();
        dm.noalias() = du * MapC(p + lo.w1, d, hm).transpose();
        layer_norm_backward(dm, la.xhat2, la.rstd2, p + lo.ln2_g, grad + lo.ln2_g, grad + lo.ln2_b, d, tmp);
        dx_mid = dx + tmp;

        // Attention block: x_mid = x_in + ctx Wo
        MapM(grad + lo.wo, d, d).noalias() += la.ctx.transpose() * dx_mid;
        dctx.noalias() = dx_mid * MapC(p + lo.wo, d, d).transpose();

        const MapC kall(cache.k[l].data(), S + T, d);
        const MapC vall(cache.v[l].data(), S + T, d);
        Mat dq(T, d);
        Mat dk_all(S + T, d);
        Mat dv_all(S + T, d);
        Mat dp, ds;
        for (int h = 0; h < H; ++h) {
            const Mat& P = la.probs[h];
            const auto dctx_h = dctx.middleCols(h * dh, dh);
            dp.noalias() = dctx_h * vall.middleCols(h * dh, dh).transpose();
            dv_all.middleCols(h * dh, dh).noalias() = P.transpose() * dctx_h;
            const Vec rs = (P.array() * dp.array()).rowwise().sum();
            ds = P.array() * (dp.colwise() - rs).array();
            ds *= scale;
            dq.middleCols(h * dh, dh).noalias() = ds * kall.middleCols(h * dh, dh);
            dk_all.middleCols(h * dh, dh).noalias() = ds.transpose() * la.q.middleCols(h * dh, dh);
        }
        if (S > 0) {
            dkv.dk[l].topRows(S) += dk_all.topRows(S);
            dkv.dv[l].topRows(S) += dv_all.topRows(S);
        }
        Mat dk_own = dk_all.bottomRows(T);
        Mat dv_own = dv_all.bottomRows(T);
        if (dkv.dk[l].rows() >= S + T) {
            dk_own += dkv.dk[l].middleRows(S, T);
            dv_own += dkv.dv[l].middleRows(S, T);
        }

        MapM(grad + lo.wq, d, d).noalias() += la.a.transpose() * dq;
        MapM(grad + lo.wk, d, d).noalias() += la.a.transpose() * dk_own;
        MapM(grad + lo.wv, d, d).noalias() += la.a.transpose() * dv_own;
        da.noalias() = dq * MapC(p + lo.wq, d, d).transpose();
        da.noalias() += dk_own * MapC(p + lo.wk, d, d).transpose();
        da.noalias() += dv_own * MapC(p + lo.wv, d, d).transpose();
        layer_norm_backward(da, la.xhat1, la.rstd1, p + lo.ln1_g, grad + lo.ln1_g, grad + lo.ln1_b, d, tmp);
        dx = dx_mid + tmp;
    }

    MapM dtok(grad + layout_.tok_emb, layout_.vocab, d);
    MapM dpos(grad + layout_.pos_emb, layout_.context, d);
    for (int i = 0; i < T; ++i) {
        dtok.row(acts.tokens[i]) += dx.row(i);
        dpos.row(acts.first_pos + i) += dx.row(i);
    }
}

}  // namespace zrl::detail
