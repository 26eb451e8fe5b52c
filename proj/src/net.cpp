#include "derender/net.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>

#include "derender/common.hpp"
#include "derender/rng.hpp"

namespace derender::net {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

constexpr double kInvSqrt2Pi = 0.3989422804014326779;

// GELU (exact erf form) evaluated together with its derivative so the
// backward pass reuses the same transcendentals.
template <typename T>
void gelu_with_deriv(const Mat<T>& z, Mat<T>& act, Mat<T>& deriv) {
    act.resize(z.rows(), z.cols());
    deriv.resize(z.rows(), z.cols());
    const T* zp = z.data();
    T* ap = act.data();
    T* dp = deriv.data();
    const std::ptrdiff_t n = z.size();
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        T x = zp[i];
        T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
        T pdf = std::exp(T(-0.5) * x * x) * T(kInvSqrt2Pi);
        ap[i] = x * cdf;
        dp[i] = cdf + x * pdf;
    }
}

// RMS norm without mean subtraction: y = g .* x * r with r = 1/sqrt(mean(x^2)+eps).
template <typename T>
void rmsnorm_forward(const Mat<T>& x, const Eigen::Map<const Mat<T>>& gain, double eps, Mat<T>& y, Vec<T>& inv) {
    const Eigen::Index n = x.rows(), d = x.cols();
    y.resize(n, d);
    inv.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        T ms = x.row(i).squaredNorm() / T(d);
        T r = T(1) / std::sqrt(ms + T(eps));
        inv(i) = r;
        y.row(i) = x.row(i).cwiseProduct(gain.row(0)) * r;
    }
}

// Accumulates dx into dst and the gain gradient into dgain.
template <typename T>
void rmsnorm_backward(const Mat<T>& dy, const Mat<T>& x, const Vec<T>& inv, const Eigen::Map<const Mat<T>>& gain,
                      Mat<T>& dst, Eigen::Map<Mat<T>>& dgain) {
    const Eigen::Index n = x.rows(), d = x.cols();
    for (Eigen::Index i = 0; i < n; ++i) {
        T r = inv(i);
        auto u = dy.row(i).cwiseProduct(gain.row(0));  // g .* dy
        T proj = u.cwiseProduct(x.row(i)).sum();
        dgain.row(0) += dy.row(i).cwiseProduct(x.row(i)) * r;
        dst.row(i) += u * r - x.row(i) * (r * r * r * proj / T(d));
    }
}

template <typename T>
struct BlockCache {
    Mat<T> x_in;   // block input (pre attention residual)
    Mat<T> n1;     // rms-normed input
    Vec<T> inv1;
    Mat<T> q, k, v;
    std::vector<Mat<T>> probs;  // per (sample, head): P x P causal attention
    Mat<T> attn;                // concatenated head outputs, before the output proj
    Mat<T> x_mid;               // after attention residual (input to ln2)
    Mat<T> n2;
    Vec<T> inv2;
    Mat<T> mlp_z;      // pre-activation
    Mat<T> mlp_act;    // gelu(mlp_z)
    Mat<T> mlp_deriv;  // gelu'(mlp_z)
};

template <typename T>
struct Cache {
    int B = 0, P = 0;
    Mat<T> img;       // B x pixels
    Mat<T> enc_act;   // B x enc_hidden
    Mat<T> enc_deriv;
    std::vector<BlockCache<T>> blocks;
    Mat<T> x_final;  // N x D, input to the final norm
    Vec<T> invf;
    Mat<T> hf;     // final normed hidden
    Mat<T> probs;  // N x V token softmax
    Mat<T> th;     // tanh(hf)
    Mat<T> num_z;  // numeric pre-activation
    Mat<T> num_act, num_deriv;
    Vec<T> y;  // numeric outputs, one per position
};

template <typename T>
Eigen::Map<Mat<T>> grad_view(const Model<T>& m, AlignedVec<T>& grads, std::string_view name) {
    const TensorSpec& s = m.spec(name);
    return Eigen::Map<Mat<T>>(grads.data() + s.offset, s.rows, s.cols);
}

// Full teacher-forced forward pass, retaining everything backward needs.
template <typename T>
void forward_cache(const Model<T>& m, const Batch& batch, Cache<T>& c) {
    const ModelConfig& cfg = m.cfg;
    const int B = batch.batch, P = batch.positions;
    const int D = cfg.embed, H = cfg.heads, dh = cfg.embed / cfg.heads;
    const Eigen::Index N = static_cast<Eigen::Index>(B) * P;
    require(P >= 1 && P <= cfg.context, Errc::context_overflow,
            "batch has " + std::to_string(P) + " positions, context is " + std::to_string(cfg.context));
    c.B = B;
    c.P = P;

    // Encoder: pixels -> enc_hidden -> embed.
    c.img.resize(B, cfg.image_pixels);
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < cfg.image_pixels; ++i)
            c.img(b, i) = T(batch.images[static_cast<std::size_t>(b) * cfg.image_pixels + i]);
    Mat<T> enc_z = (c.img * m.tensor("enc.w1").transpose()).rowwise() + m.tensor("enc.b1").row(0);
    gelu_with_deriv(enc_z, c.enc_act, c.enc_deriv);
    Mat<T> enc_out = (c.enc_act * m.tensor("enc.w2").transpose()).rowwise() + m.tensor("enc.b2").row(0);

    // Assemble position 0 = image embedding, positions 1.. = token embeddings.
    auto tok_emb = m.tensor("tok_emb");
    auto pos_emb = m.tensor("pos_emb");
    Mat<T> x(N, D);
    for (int b = 0; b < B; ++b) {
        x.row(static_cast<Eigen::Index>(b) * P) = enc_out.row(b) + pos_emb.row(0);
        for (int p = 1; p < P; ++p) {
            int id = batch.inputs[static_cast<std::size_t>(b) * (P - 1) + (p - 1)];
            require(id >= 0 && id < cfg.vocab_size, Errc::out_of_bounds, "token id out of range");
            x.row(static_cast<Eigen::Index>(b) * P + p) = tok_emb.row(id) + pos_emb.row(p);
        }
    }

    const T scale = T(1) / std::sqrt(T(dh));
    c.blocks.assign(cfg.layers, BlockCache<T>{});
    for (int l = 0; l < cfg.layers; ++l) {
        BlockCache<T>& bc = c.blocks[static_cast<std::size_t>(l)];
        std::string pre = "blk" + std::to_string(l) + ".";
        bc.x_in = x;
        rmsnorm_forward(bc.x_in, m.tensor(pre + "ln1.g"), cfg.norm_eps, bc.n1, bc.inv1);
        bc.q.noalias() = bc.n1 * m.tensor(pre + "wq").transpose();
        bc.q.rowwise() += m.tensor(pre + "bq").row(0);
        bc.k.noalias() = bc.n1 * m.tensor(pre + "wk").transpose();
        bc.k.rowwise() += m.tensor(pre + "bk").row(0);
        bc.v.noalias() = bc.n1 * m.tensor(pre + "wv").transpose();
        bc.v.rowwise() += m.tensor(pre + "bv").row(0);
        bc.attn.resize(N, D);
        bc.probs.assign(static_cast<std::size_t>(B) * H, Mat<T>());
        for (int b = 0; b < B; ++b) {
            for (int h = 0; h < H; ++h) {
                auto qb = bc.q.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh);
                auto kb = bc.k.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh);
                auto vb = bc.v.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh);
                Mat<T> s = qb * kb.transpose() * scale;
                Mat<T>& pr = bc.probs[static_cast<std::size_t>(b) * H + h];
                pr = Mat<T>::Zero(P, P);
                for (int i = 0; i < P; ++i) {
                    T mx = s.row(i).head(i + 1).maxCoeff();
                    T sum = T(0);
                    for (int j = 0; j <= i; ++j) {
                        T e = std::exp(s(i, j) - mx);
                        pr(i, j) = e;
                        sum += e;
                    }
                    pr.row(i).head(i + 1) /= sum;
                }
                bc.attn.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh).noalias() = pr * vb;
            }
        }
        Mat<T> proj = bc.attn * m.tensor(pre + "wo").transpose();
        proj.rowwise() += m.tensor(pre + "bo").row(0);
        bc.x_mid = bc.x_in + proj;

        rmsnorm_forward(bc.x_mid, m.tensor(pre + "ln2.g"), cfg.norm_eps, bc.n2, bc.inv2);
        bc.mlp_z.noalias() = bc.n2 * m.tensor(pre + "mlp.w1").transpose();
        bc.mlp_z.rowwise() += m.tensor(pre + "mlp.b1").row(0);
        gelu_with_deriv(bc.mlp_z, bc.mlp_act, bc.mlp_deriv);
        Mat<T> mlp_out = bc.mlp_act * m.tensor(pre + "mlp.w2").transpose();
        mlp_out.rowwise() += m.tensor(pre + "mlp.b2").row(0);
        x = bc.x_mid + mlp_out;
    }

    c.x_final = x;
    rmsnorm_forward(c.x_final, m.tensor("final_ln.g"), cfg.norm_eps, c.hf, c.invf);

    // Token head: softmax probabilities retained for the backward pass.
    Mat<T> logits = c.hf * m.tensor("tok_head.w").transpose();
    logits.rowwise() += m.tensor("tok_head.b").row(0);
    c.probs.resize(N, cfg.vocab_size);
    for (Eigen::Index i = 0; i < N; ++i) {
        T mx = logits.row(i).maxCoeff();
        c.probs.row(i) = (logits.row(i).array() - mx).exp();
        c.probs.row(i) /= c.probs.row(i).sum();
    }

    // Numeric head: tanh -> linear -> GELU -> linear, one scalar per position.
    c.th = c.hf.array().tanh();
    c.num_z.noalias() = c.th * m.tensor("num.w1").transpose();
    c.num_z.rowwise() += m.tensor("num.b1").row(0);
    gelu_with_deriv(c.num_z, c.num_act, c.num_deriv);
    c.y = (c.num_act * m.tensor("num.w2").transpose()).col(0);
    c.y.array() += m.tensor("num.b2")(0, 0);
}

template <typename T>
LossBreakdown loss_from_cache(const Model<T>& m, const Batch& batch, const Cache<T>& c, double w_ce, double w_mse) {
    LossBreakdown out;
    const int P = batch.positions;
    double ce_sum = 0.0;
    long ce_count = 0;
    for (int b = 0; b < batch.batch; ++b) {
        for (int p = 0; p < P; ++p) {
            int t = batch.targets[static_cast<std::size_t>(b) * P + p];
            if (t < 0) continue;
            require(t < m.cfg.vocab_size, Errc::out_of_bounds, "target id out of range");
            double pr = static_cast<double>(c.probs(static_cast<Eigen::Index>(b) * P + p, t));
            ce_sum += -std::log(std::max(pr, 1e-300));
            ++ce_count;
        }
    }
    double mse_sum = 0.0;
    for (const Batch::Slot& s : batch.slots) {
        double y = static_cast<double>(c.y(static_cast<Eigen::Index>(s.b) * P + s.p));
        double d = y - s.target;
        mse_sum += d * d;
    }
    out.tokens = ce_count;
    out.slots = static_cast<long>(batch.slots.size());
    out.ce = ce_count > 0 ? ce_sum / static_cast<double>(ce_count) : 0.0;
    out.mse = out.slots > 0 ? mse_sum / static_cast<double>(out.slots) : 0.0;
    out.total = w_ce * out.ce + w_mse * out.mse;
    return out;
}

template <typename T>
void backward_cache(const Model<T>& m, const Batch& batch, const Cache<T>& c, AlignedVec<T>& grads, double w_ce,
                    double w_mse, long ce_count) {
    const ModelConfig& cfg = m.cfg;
    const int B = batch.batch, P = batch.positions;
    const int D = cfg.embed, H = cfg.heads, dh = cfg.embed / cfg.heads;
    const Eigen::Index N = static_cast<Eigen::Index>(B) * P;
    grads.assign(m.params.size(), T(0));

    Mat<T> dhf = Mat<T>::Zero(N, D);

    // Token head.
    {
        Mat<T> dlogits = Mat<T>::Zero(N, cfg.vocab_size);
        if (ce_count > 0) {
            T s = T(w_ce) / T(ce_count);
            for (int b = 0; b < B; ++b) {
                for (int p = 0; p < P; ++p) {
                    int t = batch.targets[static_cast<std::size_t>(b) * P + p];
                    if (t < 0) continue;
                    Eigen::Index r = static_cast<Eigen::Index>(b) * P + p;
                    dlogits.row(r) = c.probs.row(r) * s;
                    dlogits(r, t) -= s;
                }
            }
        }
        auto dw = grad_view(m, grads, "tok_head.w");
        auto db = grad_view(m, grads, "tok_head.b");
        dw.noalias() += dlogits.transpose() * c.hf;
        db.row(0) += dlogits.colwise().sum();
        dhf.noalias() += dlogits * m.tensor("tok_head.w");
    }

    // Numeric head.
    if (!batch.slots.empty()) {
        Vec<T> dy = Vec<T>::Zero(N);
        T s = T(2.0 * w_mse) / T(batch.slots.size());
        for (const Batch::Slot& sl : batch.slots) {
            Eigen::Index r = static_cast<Eigen::Index>(sl.b) * P + sl.p;
            dy(r) += s * (c.y(r) - T(sl.target));
        }
        auto dw2 = grad_view(m, grads, "num.w2");
        auto db2 = grad_view(m, grads, "num.b2");
        dw2.row(0) += dy.transpose() * c.num_act;
        db2(0, 0) += dy.sum();
        Mat<T> da = dy * m.tensor("num.w2");  // N x numeric_hidden
        Mat<T> dz = da.cwiseProduct(c.num_deriv);
        auto dw1 = grad_view(m, grads, "num.w1");
        auto db1 = grad_view(m, grads, "num.b1");
        dw1.noalias() += dz.transpose() * c.th;
        db1.row(0) += dz.colwise().sum();
        Mat<T> dth = dz * m.tensor("num.w1");
        dhf.array() += dth.array() * (T(1) - c.th.array().square());
    }

    // Final norm.
    Mat<T> dx = Mat<T>::Zero(N, D);
    {
        auto dg = grad_view(m, grads, "final_ln.g");
        rmsnorm_backward(dhf, c.x_final, c.invf, m.tensor("final_ln.g"), dx, dg);
    }

    const T scale = T(1) / std::sqrt(T(dh));
    for (int l = cfg.layers - 1; l >= 0; --l) {
        const BlockCache<T>& bc = c.blocks[static_cast<std::size_t>(l)];
        std::string pre = "blk" + std::to_string(l) + ".";

        // MLP branch (dx is the gradient at the block output).
        {
            auto dw2 = grad_view(m, grads, pre + "mlp.w2");
            auto db2 = grad_view(m, grads, pre + "mlp.b2");
            dw2.noalias() += dx.transpose() * bc.mlp_act;
            db2.row(0) += dx.colwise().sum();
            Mat<T> dh_act = dx * m.tensor(pre + "mlp.w2");
            Mat<T> dz = dh_act.cwiseProduct(bc.mlp_deriv);
            auto dw1 = grad_view(m, grads, pre + "mlp.w1");
            auto db1 = grad_view(m, grads, pre + "mlp.b1");
            dw1.noalias() += dz.transpose() * bc.n2;
            db1.row(0) += dz.colwise().sum();
            Mat<T> dn2 = dz * m.tensor(pre + "mlp.w1");
            auto dg = grad_view(m, grads, pre + "ln2.g");
            rmsnorm_backward(dn2, bc.x_mid, bc.inv2, m.tensor(pre + "ln2.g"), dx, dg);
        }

        // Attention branch (dx is now the gradient at the attention residual).
        {
            auto dwo = grad_view(m, grads, pre + "wo");
            auto dbo = grad_view(m, grads, pre + "bo");
            dwo.noalias() += dx.transpose() * bc.attn;
            dbo.row(0) += dx.colwise().sum();
            Mat<T> dattn = dx * m.tensor(pre + "wo");

            Mat<T> dq = Mat<T>::Zero(N, D), dk = Mat<T>::Zero(N, D), dv = Mat<T>::Zero(N, D);
            for (int b = 0; b < B; ++b) {
                for (int h = 0; h < H; ++h) {
                    const Mat<T>& pr = bc.probs[static_cast<std::size_t>(b) * H + h];
                    auto dab = dattn.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh);
                    auto qb = bc.q.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh);
                    auto kb = bc.k.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh);
                    auto vb = bc.v.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh);
                    dv.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh).noalias() = pr.transpose() * dab;
                    Mat<T> dp = dab * vb.transpose();
                    Mat<T> ds = Mat<T>::Zero(P, P);
                    for (int i = 0; i < P; ++i) {
                        T dot = T(0);
                        for (int j = 0; j <= i; ++j) dot += pr(i, j) * dp(i, j);
                        for (int j = 0; j <= i; ++j) ds(i, j) = pr(i, j) * (dp(i, j) - dot);
                    }
                    dq.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh).noalias() = ds * kb * scale;
                    dk.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh).noalias() = ds.transpose() * qb * scale;
                }
            }
            Mat<T> dn1 = dq * m.tensor(pre + "wq");
            dn1.noalias() += dk * m.tensor(pre + "wk");
            dn1.noalias() += dv * m.tensor(pre + "wv");
            auto dwq = grad_view(m, grads, pre + "wq");
            auto dbq = grad_view(m, grads, pre + "bq");
            auto dwk = grad_view(m, grads, pre + "wk");
            auto dbk = grad_view(m, grads, pre + "bk");
            auto dwv = grad_view(m, grads, pre + "wv");
            auto dbv = grad_view(m, grads, pre + "bv");
            dwq.noalias() += dq.transpose() * bc.n1;
            dbq.row(0) += dq.colwise().sum();
            dwk.noalias() += dk.transpose() * bc.n1;
            dbk.row(0) += dk.colwise().sum();
            dwv.noalias() += dv.transpose() * bc.n1;
            dbv.row(0) += dv.colwise().sum();
            auto dg = grad_view(m, grads, pre + "ln1.g");
            rmsnorm_backward(dn1, bc.x_in, bc.inv1, m.tensor(pre + "ln1.g"), dx, dg);
        }
    }

    // Embeddings and encoder.
    {
        auto dtok = grad_view(m, grads, "tok_emb");
        auto dpos = grad_view(m, grads, "pos_emb");
        Mat<T> denc(B, D);
        for (int b = 0; b < B; ++b) {
            denc.row(b) = dx.row(static_cast<Eigen::Index>(b) * P);
            dpos.row(0) += dx.row(static_cast<Eigen::Index>(b) * P);
            for (int p = 1; p < P; ++p) {
                int id = batch.inputs[static_cast<std::size_t>(b) * (P - 1) + (p - 1)];
                dtok.row(id) += dx.row(static_cast<Eigen::Index>(b) * P + p);
                dpos.row(p) += dx.row(static_cast<Eigen::Index>(b) * P + p);
            }
        }
        auto dw2 = grad_view(m, grads, "enc.w2");
        auto db2 = grad_view(m, grads, "enc.b2");
        dw2.noalias() += denc.transpose() * c.enc_act;
        db2.row(0) += denc.colwise().sum();
        Mat<T> dh1 = (denc * m.tensor("enc.w2")).cwiseProduct(c.enc_deriv);
        auto dw1 = grad_view(m, grads, "enc.w1");
        auto db1 = grad_view(m, grads, "enc.b1");
        dw1.noalias() += dh1.transpose() * c.img;
        db1.row(0) += dh1.colwise().sum();
    }
}

}  // namespace

void ModelConfig::validate() const {
    require(vocab_size >= 5, Errc::invalid_config, "vocab_size must cover the special tokens");
    require(context >= 2, Errc::invalid_config, "context must be at least 2");
    require(embed > 0 && heads > 0 && embed % heads == 0, Errc::invalid_config, "embed must be divisible by heads");
    require(layers >= 1, Errc::invalid_config, "layers must be positive");
    require(mlp_hidden > 0 && numeric_hidden > 0 && encoder_hidden > 0, Errc::invalid_config,
            "hidden sizes must be positive");
    require(image_pixels > 0, Errc::invalid_config, "image_pixels must be positive");
    require(norm_eps > 0, Errc::invalid_config, "norm_eps must be positive");
    require(slot_families >= 0, Errc::invalid_config, "slot_families must be non-negative");
    if (mode == tok::Mode::float_slots)
        require(slot_families >= 1, Errc::invalid_config, "float mode needs at least one slot family");
}

nlohmann::json ModelConfig::to_json() const {
    return nlohmann::json{{"vocab_size", vocab_size},
                          {"context", context},
                          {"embed", embed},
                          {"layers", layers},
                          {"heads", heads},
                          {"mlp_hidden", mlp_hidden},
                          {"numeric_hidden", numeric_hidden},
                          {"image_pixels", image_pixels},
                          {"encoder_hidden", encoder_hidden},
                          {"mode", tok::mode_name(mode)},
                          {"slot_families", slot_families},
                          {"norm_eps", norm_eps}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.context = j.at("context").get<int>();
    c.embed = j.at("embed").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_hidden = j.at("mlp_hidden").get<int>();
    c.numeric_hidden = j.at("numeric_hidden").get<int>();
    c.image_pixels = j.at("image_pixels").get<int>();
    c.encoder_hidden = j.at("encoder_hidden").get<int>();
    c.mode = tok::mode_from_name(j.at("mode").get<std::string>());
    c.slot_families = j.at("slot_families").get<int>();
    c.norm_eps = j.at("norm_eps").get<double>();
    c.validate();
    return c;
}

std::vector<TensorSpec> make_tensor_specs(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<TensorSpec> specs;
    std::size_t offset = 0;
    auto add = [&](std::string name, int rows, int cols) {
        TensorSpec s{std::move(name), rows, cols, offset};
        offset += s.size();
        specs.push_back(std::move(s));
    };
    add("enc.w1", cfg.encoder_hidden, cfg.image_pixels);
    add("enc.b1", 1, cfg.encoder_hidden);
    add("enc.w2", cfg.embed, cfg.encoder_hidden);
    add("enc.b2", 1, cfg.embed);
    add("tok_emb", cfg.vocab_size, cfg.embed);
    add("pos_emb", cfg.context, cfg.embed);
    for (int l = 0; l < cfg.layers; ++l) {
        std::string pre = "blk" + std::to_string(l) + ".";
        add(pre + "ln1.g", 1, cfg.embed);
        add(pre + "wq", cfg.embed, cfg.embed);
        add(pre + "bq", 1, cfg.embed);
        add(pre + "wk", cfg.embed, cfg.embed);
        add(pre + "bk", 1, cfg.embed);
        add(pre + "wv", cfg.embed, cfg.embed);
        add(pre + "bv", 1, cfg.embed);
        add(pre + "wo", cfg.embed, cfg.embed);
        add(pre + "bo", 1, cfg.embed);
        add(pre + "ln2.g", 1, cfg.embed);
        add(pre + "mlp.w1", cfg.mlp_hidden, cfg.embed);
        add(pre + "mlp.b1", 1, cfg.mlp_hidden);
        add(pre + "mlp.w2", cfg.embed, cfg.mlp_hidden);
        add(pre + "mlp.b2", 1, cfg.embed);
    }
    add("final_ln.g", 1, cfg.embed);
    add("tok_head.w", cfg.vocab_size, cfg.embed);
    add("tok_head.b", 1, cfg.vocab_size);
    add("num.w1", cfg.numeric_hidden, cfg.embed);
    add("num.b1", 1, cfg.numeric_hidden);
    add("num.w2", 1, cfg.numeric_hidden);
    add("num.b2", 1, 1);
    return specs;
}

template <typename T>
const TensorSpec& Model<T>::spec(std::string_view name) const {
    for (const TensorSpec& s : specs)
        if (s.name == name) return s;
    fail(Errc::out_of_bounds, "unknown tensor '" + std::string(name) + "'");
}

template <typename T>
Eigen::Map<typename Model<T>::Mat> Model<T>::tensor(std::string_view name) {
    const TensorSpec& s = spec(name);
    return Eigen::Map<Mat>(params.data() + s.offset, s.rows, s.cols);
}

template <typename T>
Eigen::Map<const typename Model<T>::Mat> Model<T>::tensor(std::string_view name) const {
    const TensorSpec& s = spec(name);
    return Eigen::Map<const Mat>(params.data() + s.offset, s.rows, s.cols);
}

template <typename T>
Model<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model<T> m;
    m.cfg = cfg;
    m.specs = make_tensor_specs(cfg);
    std::size_t total = 0;
    for (const TensorSpec& s : m.specs) total += s.size();
    m.params.assign(total, T(0));
    Rng rng(derive_seed(seed, 0x1417));
    for (const TensorSpec& s : m.specs) {
        bool gain = s.name.size() >= 2 && s.name.compare(s.name.size() - 2, 2, ".g") == 0;
        bool bias = !gain && s.rows == 1 && s.name.find(".b") != std::string::npos;
        for (std::size_t i = 0; i < s.size(); ++i) {
            T v = gain ? T(1) : (bias ? T(0) : T(rng.normal() * 0.02));
            m.params[s.offset + i] = v;
        }
    }
    if (cfg.slot_families > 0) {
        m.slot_mu.assign(static_cast<std::size_t>(cfg.slot_families), 0.0);
        m.slot_sigma.assign(static_cast<std::size_t>(cfg.slot_families), 1.0);
    }
    return m;
}

template <typename T>
Batch make_batch(const Model<T>& m, const std::vector<const TrainSample*>& samples, int pad_id) {
    require(!samples.empty(), Errc::empty_input, "empty batch");
    const ModelConfig& cfg = m.cfg;
    int max_len = 0;
    for (const TrainSample* s : samples) {
        require(s->ids.size() >= 2, Errc::length_mismatch, "sample needs at least two tokens");
        require(static_cast<int>(s->ids.size()) <= cfg.context, Errc::context_overflow,
                "sample of " + std::to_string(s->ids.size()) + " tokens exceeds context " +
                    std::to_string(cfg.context));
        require(s->image.size() == static_cast<std::size_t>(cfg.image_pixels), Errc::length_mismatch,
                "image size mismatch");
        max_len = std::max(max_len, static_cast<int>(s->ids.size()));
    }
    Batch batch;
    batch.batch = static_cast<int>(samples.size());
    batch.positions = max_len;  // position 0 is the image, tokens ids[0..L-2] follow
    batch.images.resize(static_cast<std::size_t>(batch.batch) * cfg.image_pixels);
    batch.inputs.assign(static_cast<std::size_t>(batch.batch) * (max_len - 1), pad_id);
    batch.targets.assign(static_cast<std::size_t>(batch.batch) * max_len, -1);
    for (int b = 0; b < batch.batch; ++b) {
        const TrainSample& s = *samples[static_cast<std::size_t>(b)];
        std::copy(s.image.begin(), s.image.end(), batch.images.begin() + static_cast<std::size_t>(b) * cfg.image_pixels);
        int L = static_cast<int>(s.ids.size());
        for (int i = 0; i + 1 < L; ++i) batch.inputs[static_cast<std::size_t>(b) * (max_len - 1) + i] = s.ids[static_cast<std::size_t>(i)];
        for (int i = 0; i < L; ++i) batch.targets[static_cast<std::size_t>(b) * max_len + i] = s.ids[static_cast<std::size_t>(i)];
        int ordinal = 0;
        for (const auto& [pos, value] : s.slots) {
            require(pos >= 0 && pos + 1 < max_len, Errc::out_of_bounds, "slot position out of range");
            Batch::Slot sl;
            sl.b = b;
            sl.p = pos + 1;  // ids[pos] sits at input position pos+1
            sl.family = cfg.slot_families > 0 ? std::min(ordinal, cfg.slot_families - 1) : 0;
            double mu = m.slot_mu.empty() ? 0.0 : m.slot_mu[static_cast<std::size_t>(sl.family)];
            double sigma = m.slot_sigma.empty() ? 1.0 : m.slot_sigma[static_cast<std::size_t>(sl.family)];
            sl.target = (value - mu) / sigma;
            batch.slots.push_back(sl);
            ++ordinal;
        }
    }
    return batch;
}

template <typename T>
LossBreakdown compute_loss(const Model<T>& m, const Batch& batch, double w_ce, double w_mse) {
    Cache<T> c;
    forward_cache(m, batch, c);
    return loss_from_cache(m, batch, c, w_ce, w_mse);
}

template <typename T>
LossBreakdown compute_loss_and_grads(const Model<T>& m, const Batch& batch, AlignedVec<T>& grads, double w_ce,
                                     double w_mse) {
    Cache<T> c;
    forward_cache(m, batch, c);
    LossBreakdown out = loss_from_cache(m, batch, c, w_ce, w_mse);
    backward_cache(m, batch, c, grads, w_ce, w_mse, out.tokens);
    return out;
}

void full_forward(const Model<float>& m, const Batch& batch, Eigen::MatrixXf* logits, Eigen::VectorXf* numeric) {
    Cache<float> c;
    forward_cache(m, batch, c);
    if (logits != nullptr) {
        // Reconstruct log-probability-shaped outputs is unnecessary; callers
        // only rank tokens, so the softmax itself is fine to return.
        *logits = c.probs;
    }
    if (numeric != nullptr) *numeric = c.y;
}

GradCheckReport grad_check(const ModelConfig& cfg_in, std::uint64_t seed, int per_tensor, double eps) {
    ModelConfig cfg = cfg_in;
    cfg.validate();
    Model<double> m = init_model<double>(cfg, seed);

    // Synthetic batch: random images, random token streams with [NUM] slots.
    Rng rng(derive_seed(seed, 0x6C4D));
    std::vector<TrainSample> samples(2);
    for (TrainSample& s : samples) {
        s.image.resize(static_cast<std::size_t>(cfg.image_pixels));
        for (float& v : s.image) v = static_cast<float>(rng.uniform());
        int body = 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.context - 5)));
        s.ids.push_back(1);  // [BOS]
        for (int i = 0; i < body; ++i) {
            if (cfg.mode == tok::Mode::float_slots && rng.uniform() < 0.35) {
                s.slots.emplace_back(static_cast<int>(s.ids.size()), rng.uniform() * 4.0 - 2.0);
                s.ids.push_back(3);  // [NUM]
            } else {
                s.ids.push_back(4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab_size - 4))));
            }
        }
        s.ids.push_back(2);  // [EOS]
    }
    // Ensure the numeric head receives gradient.
    if (cfg.mode == tok::Mode::float_slots && samples[0].slots.empty() && samples[1].slots.empty()) {
        samples[0].slots.emplace_back(1, 0.5);
        samples[0].ids[1] = 3;
    }
    std::vector<const TrainSample*> ptrs{&samples[0], &samples[1]};
    Batch batch = make_batch(m, ptrs, 0);

    AlignedVec<double> grads;
    compute_loss_and_grads(m, batch, grads, 1.0, 1.0);

    GradCheckReport report;
    for (const TensorSpec& spec : m.specs) {
        double worst = 0.0;
        for (int k = 0; k < per_tensor; ++k) {
            std::size_t idx = spec.offset + rng.below(spec.size());
            double saved = m.params[idx];
            m.params[idx] = saved + eps;
            double up = compute_loss(m, batch, 1.0, 1.0).total;
            m.params[idx] = saved - eps;
            double down = compute_loss(m, batch, 1.0, 1.0).total;
            m.params[idx] = saved;
            double numeric = (up - down) / (2.0 * eps);
            double analytic = grads[idx];
            double err = std::abs(numeric - analytic) / std::max({1.0, std::abs(numeric), std::abs(analytic)});
            worst = std::max(worst, err);
            ++report.checked;
        }
        report.per_tensor[spec.name] = worst;
        report.max_rel_err = std::max(report.max_rel_err, worst);
    }
    return report;
}

// Training ------------------------------------------------------------------------

namespace {

// Numeric literals decoded from a char-mode stream: maximal runs of
// single-character digit/sign/dot tokens that parse fully as a number.
std::vector<double> extract_char_numbers(const std::vector<int>& ids, const tok::Vocabulary& vocab) {
    std::vector<double> out;
    std::string buf;
    auto flush = [&] {
        if (!buf.empty()) {
            char* end = nullptr;
            double v = std::strtod(buf.c_str(), &end);
            if (end == buf.c_str() + buf.size()) out.push_back(v);
            buf.clear();
        }
    };
    for (int id : ids) {
        if (id >= 0 && id < vocab.size()) {
            const std::string& t = vocab.tokens[static_cast<std::size_t>(id)];
            if (t.size() == 1 && (std::isdigit(static_cast<unsigned char>(t[0])) || t[0] == '-' || t[0] == '.')) {
                buf += t;
                continue;
            }
        }
        flush();
    }
    flush();
    return out;
}

double learning_rate(const TrainConfig& tc, int step) {
    if (step <= tc.warmup) return tc.lr_max * static_cast<double>(step) / static_cast<double>(std::max(tc.warmup, 1));
    double t = static_cast<double>(step - tc.warmup) / static_cast<double>(std::max(tc.steps - tc.warmup, 1));
    return tc.lr_min + 0.5 * (tc.lr_max - tc.lr_min) * (1.0 + std::cos(M_PI * t));
}

// Decoded-value mean squared error over (a capped subset of) the validation
// split.  Float mode reads the numeric head under teacher forcing; char mode
// greedy-decodes and parses the emitted literals.  Count mismatches cost 1.0
// per missing or extra value.
double validation_metric(const Model<float>& m, const TrainData& data, int val_max, int pad_id) {
    if (data.val.empty()) return 0.0;
    std::size_t n = std::min(data.val.size(), static_cast<std::size_t>(val_max));
    double se = 0.0;
    long count = 0;
    if (data.mode == tok::Mode::float_slots) {
        const std::size_t chunk = 256;
        for (std::size_t at = 0; at < n; at += chunk) {
            std::size_t hi = std::min(n, at + chunk);
            std::vector<const TrainSample*> ptrs;
            for (std::size_t i = at; i < hi; ++i) ptrs.push_back(&data.val[i]);
            Batch batch = make_batch(m, ptrs, pad_id);
            Eigen::VectorXf y;
            full_forward(m, batch, nullptr, &y);
            std::size_t slot_at = 0;
            for (std::size_t i = at; i < hi; ++i) {
                const TrainSample& s = data.val[i];
                for (std::size_t k = 0; k < s.slots.size(); ++k, ++slot_at) {
                    const Batch::Slot& sl = batch.slots[slot_at];
                    double mu = m.slot_mu[static_cast<std::size_t>(sl.family)];
                    double sigma = m.slot_sigma[static_cast<std::size_t>(sl.family)];
                    double pred = mu + sigma * static_cast<double>(y(static_cast<Eigen::Index>(sl.b) * batch.positions + sl.p));
                    double d = pred - s.slots[k].second;
                    se += d * d;
                    ++count;
                }
            }
        }
    } else {
        const std::size_t chunk = 256;
        for (std::size_t at = 0; at < n; at += chunk) {
            std::size_t hi = std::min(n, at + chunk);
            std::vector<const float*> images;
            for (std::size_t i = at; i < hi; ++i) images.push_back(data.val[i].image.data());
            std::vector<std::vector<int>> decoded = greedy_decode(m, images, data.vocab, 0);
            for (std::size_t i = at; i < hi; ++i) {
                std::vector<double> values = extract_char_numbers(decoded[i - at], data.vocab);
                const std::vector<double>& gt = data.val[i].gt_values;
                std::size_t aligned = std::min(values.size(), gt.size());
                for (std::size_t k = 0; k < aligned; ++k) {
                    double d = values[k] - gt[k];
                    se += d * d;
                }
                se += static_cast<double>(std::max(values.size(), gt.size()) - aligned);
                count += static_cast<long>(std::max<std::size_t>(gt.size(), 1));
            }
        }
    }
    return count > 0 ? se / static_cast<double>(count) : 0.0;
}

}  // namespace

TrainResult train_model(const ModelConfig& cfg_in, const TrainConfig& tc, const TrainData& data) {
    ModelConfig cfg = cfg_in;
    cfg.vocab_size = static_cast<int>(data.vocab.size());
    cfg.mode = data.mode;
    cfg.validate();
    require(!data.train.empty(), Errc::empty_input, "no training samples");
    require(tc.steps >= 1 && tc.batch_size >= 1, Errc::invalid_config, "steps and batch_size must be positive");

    Model<float> model = init_model<float>(cfg, tc.seed);
    const int pad_id = data.vocab.pad_id;

    // Slot standardization from the training split (population std, floored).
    if (cfg.mode == tok::Mode::float_slots) {
        int fam = cfg.slot_families;
        std::vector<double> sum(static_cast<std::size_t>(fam), 0.0), sq(static_cast<std::size_t>(fam), 0.0);
        std::vector<long> cnt(static_cast<std::size_t>(fam), 0);
        for (const TrainSample& s : data.train) {
            int ordinal = 0;
            for (const auto& [pos, value] : s.slots) {
                int f = std::min(ordinal, fam - 1);
                sum[static_cast<std::size_t>(f)] += value;
                sq[static_cast<std::size_t>(f)] += value * value;
                ++cnt[static_cast<std::size_t>(f)];
                ++ordinal;
            }
        }
        for (int f = 0; f < fam; ++f) {
            auto uf = static_cast<std::size_t>(f);
            if (cnt[uf] > 0) {
                double mu = sum[uf] / static_cast<double>(cnt[uf]);
                double var = std::max(sq[uf] / static_cast<double>(cnt[uf]) - mu * mu, 0.0);
                model.slot_mu[uf] = mu;
                model.slot_sigma[uf] = std::max(std::sqrt(var), 1e-8);
            }
        }
    }

    AlignedVec<float> grads, mom(model.params.size(), 0.0f), vel(model.params.size(), 0.0f);
    Rng order(derive_seed(tc.seed, 0xB47C4));
    TrainResult result;
    double last_val = 0.0;
    bool has_any_val = false;

    for (int step = 1; step <= tc.steps; ++step) {
        std::vector<const TrainSample*> ptrs;
        ptrs.reserve(static_cast<std::size_t>(tc.batch_size));
        for (int i = 0; i < tc.batch_size; ++i) ptrs.push_back(&data.train[order.below(data.train.size())]);
        Batch batch = make_batch(model, ptrs, pad_id);
        LossBreakdown loss = compute_loss_and_grads(model, batch, grads, tc.w_ce, tc.w_mse);
        if (!std::isfinite(loss.total)) {
            fail(Errc::divergence_detected, "non-finite loss at step " + std::to_string(step));
        }

        double lr = learning_rate(tc, step);
        double bc1 = 1.0 - std::pow(tc.adam_beta1, step);
        double bc2 = 1.0 - std::pow(tc.adam_beta2, step);
        const auto b1 = static_cast<float>(tc.adam_beta1);
        const auto b2 = static_cast<float>(tc.adam_beta2);
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            float g = grads[i];
            mom[i] = b1 * mom[i] + (1.0f - b1) * g;
            vel[i] = b2 * vel[i] + (1.0f - b2) * g * g;
            double mhat = static_cast<double>(mom[i]) / bc1;
            double vhat = static_cast<double>(vel[i]) / bc2;
            model.params[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + tc.adam_eps));
        }

        TrainTraceRow row;
        row.step = step;
        row.lr = lr;
        row.total = loss.total;
        row.ce = loss.ce;
        row.mse = loss.mse;
        if (!data.val.empty() && tc.val_every > 0 && (step % tc.val_every == 0 || step == tc.steps)) {
            last_val = validation_metric(model, data, tc.val_max, pad_id);
            has_any_val = true;
            row.val_metric = last_val;
            row.has_val = true;
        }
        result.trace.push_back(row);
    }

    if (!has_any_val && !data.val.empty()) last_val = validation_metric(model, data, tc.val_max, pad_id);
    result.final_val = last_val;
    result.model = std::move(model);
    return result;
}

// Decoding ------------------------------------------------------------------------

namespace {

// Incremental decoder: processes one position for every stream in lockstep,
// holding per-layer key/value caches.
class Decoder {
  public:
    Decoder(const Model<float>& m, int batch) : m_(m), B_(batch) {
        const ModelConfig& cfg = m.cfg;
        keys_.assign(static_cast<std::size_t>(cfg.layers), Mat<float>::Zero(static_cast<Eigen::Index>(B_) * cfg.context, cfg.embed));
        vals_ = keys_;
    }

    // Position 0: image embeddings.
    void start(const std::vector<const float*>& images, Eigen::MatrixXf* logits, Eigen::VectorXf* numeric) {
        const ModelConfig& cfg = m_.cfg;
        Mat<float> img(B_, cfg.image_pixels);
        for (int b = 0; b < B_; ++b)
            for (int i = 0; i < cfg.image_pixels; ++i) img(b, i) = images[static_cast<std::size_t>(b)][i];
        Mat<float> h1 = (img * m_.tensor("enc.w1").transpose()).rowwise() + m_.tensor("enc.b1").row(0);
        h1 = h1.unaryExpr([](float x) {
            return x * 0.5f * (1.0f + std::erf(x * 0.70710678118654752f));
        });
        Mat<float> x = (h1 * m_.tensor("enc.w2").transpose()).rowwise() + m_.tensor("enc.b2").row(0);
        x.rowwise() += m_.tensor("pos_emb").row(0);
        process(x, logits, numeric);
    }

    void step(const std::vector<int>& token_ids, Eigen::MatrixXf* logits, Eigen::VectorXf* numeric) {
        const ModelConfig& cfg = m_.cfg;
        require(t_ < cfg.context, Errc::context_overflow, "decoder ran past the context window");
        auto tok_emb = m_.tensor("tok_emb");
        Mat<float> x(B_, cfg.embed);
        for (int b = 0; b < B_; ++b) {
            int id = token_ids[static_cast<std::size_t>(b)];
            require(id >= 0 && id < cfg.vocab_size, Errc::out_of_bounds, "token id out of range");
            x.row(b) = tok_emb.row(id);
        }
        x.rowwise() += m_.tensor("pos_emb").row(t_);
        process(x, logits, numeric);
    }

    int position() const { return t_; }

  private:
    void process(Mat<float>& x, Eigen::MatrixXf* logits, Eigen::VectorXf* numeric) {
        const ModelConfig& cfg = m_.cfg;
        const int D = cfg.embed, H = cfg.heads, dh = cfg.embed / cfg.heads;
        const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
        for (int l = 0; l < cfg.layers; ++l) {
            std::string pre = "blk" + std::to_string(l) + ".";
            Mat<float> n1(B_, D);
            Vec<float> inv;
            rmsnorm_forward(x, m_.tensor(pre + "ln1.g"), cfg.norm_eps, n1, inv);
            Mat<float> q = (n1 * m_.tensor(pre + "wq").transpose()).rowwise() + m_.tensor(pre + "bq").row(0);
            Mat<float> k = (n1 * m_.tensor(pre + "wk").transpose()).rowwise() + m_.tensor(pre + "bk").row(0);
            Mat<float> v = (n1 * m_.tensor(pre + "wv").transpose()).rowwise() + m_.tensor(pre + "bv").row(0);
            Mat<float>& kc = keys_[static_cast<std::size_t>(l)];
            Mat<float>& vc = vals_[static_cast<std::size_t>(l)];
            Mat<float> attn(B_, D);
            for (int b = 0; b < B_; ++b) {
                Eigen::Index base = static_cast<Eigen::Index>(b) * cfg.context;
                kc.row(base + t_) = k.row(b);
                vc.row(base + t_) = v.row(b);
                for (int h = 0; h < H; ++h) {
                    auto kb = kc.block(base, h * dh, t_ + 1, dh);
                    auto vb = vc.block(base, h * dh, t_ + 1, dh);
                    Eigen::RowVectorXf s = q.row(b).segment(h * dh, dh) * kb.transpose() * scale;
                    float mx = s.maxCoeff();
                    Eigen::RowVectorXf e = (s.array() - mx).exp();
                    e /= e.sum();
                    attn.row(b).segment(h * dh, dh) = e * vb;
                }
            }
            x += (attn * m_.tensor(pre + "wo").transpose()).rowwise() + m_.tensor(pre + "bo").row(0);

            Mat<float> n2(B_, D);
            rmsnorm_forward(x, m_.tensor(pre + "ln2.g"), cfg.norm_eps, n2, inv);
            Mat<float> z = (n2 * m_.tensor(pre + "mlp.w1").transpose()).rowwise() + m_.tensor(pre + "mlp.b1").row(0);
            z = z.unaryExpr([](float u) { return u * 0.5f * (1.0f + std::erf(u * 0.70710678118654752f)); });
            x += (z * m_.tensor(pre + "mlp.w2").transpose()).rowwise() + m_.tensor(pre + "mlp.b2").row(0);
        }
        Mat<float> hf(B_, D);
        Vec<float> inv;
        rmsnorm_forward(x, m_.tensor("final_ln.g"), cfg.norm_eps, hf, inv);
        if (logits != nullptr) {
            *logits = (hf * m_.tensor("tok_head.w").transpose()).rowwise() + m_.tensor("tok_head.b").row(0);
        }
        if (numeric != nullptr) {
            Mat<float> th = hf.array().tanh();
            Mat<float> z = (th * m_.tensor("num.w1").transpose()).rowwise() + m_.tensor("num.b1").row(0);
            z = z.unaryExpr([](float u) { return u * 0.5f * (1.0f + std::erf(u * 0.70710678118654752f)); });
            *numeric = (z * m_.tensor("num.w2").transpose()).col(0).array() + m_.tensor("num.b2")(0, 0);
        }
        ++t_;
    }

    const Model<float>& m_;
    int B_ = 0;
    int t_ = 0;
    std::vector<Mat<float>> keys_, vals_;
};

int argmax_lowest(const Eigen::MatrixXf& logits, int row) {
    int best = 0;
    float best_v = logits(row, 0);
    for (int j = 1; j < logits.cols(); ++j) {
        if (logits(row, j) > best_v) {
            best_v = logits(row, j);
            best = j;
        }
    }
    return best;
}

}  // namespace

std::vector<std::vector<int>> greedy_decode(const Model<float>& m, const std::vector<const float*>& images,
                                            const tok::Vocabulary& vocab, int max_tokens) {
    require(!images.empty(), Errc::empty_input, "no images to decode");
    const int B = static_cast<int>(images.size());
    const int bos = vocab.bos_id, eos = vocab.eos_id, pad = vocab.pad_id;
    int cap = m.cfg.context;  // ids per stream, including [BOS]/[EOS]
    if (max_tokens > 0) cap = std::min(cap, max_tokens);
    require(cap >= 2, Errc::invalid_config, "decode cap leaves no room for [BOS]/[EOS]");

    Decoder dec(m, B);
    dec.start(images, nullptr, nullptr);  // output at position 0 predicts [BOS]; it is forced instead

    std::vector<std::vector<int>> ids(static_cast<std::size_t>(B), std::vector<int>{bos});
    std::vector<char> done(static_cast<std::size_t>(B), 0);
    Eigen::MatrixXf logits;
    while (true) {
        bool all_done = true;
        for (int b = 0; b < B; ++b)
            if (!done[static_cast<std::size_t>(b)]) all_done = false;
        if (all_done || dec.position() >= cap) break;
        std::vector<int> feed(static_cast<std::size_t>(B), pad);
        for (int b = 0; b < B; ++b)
            if (!done[static_cast<std::size_t>(b)]) feed[static_cast<std::size_t>(b)] = ids[static_cast<std::size_t>(b)].back();
        dec.step(feed, &logits, nullptr);
        for (int b = 0; b < B; ++b) {
            if (done[static_cast<std::size_t>(b)]) continue;
            int next = argmax_lowest(logits, b);
            ids[static_cast<std::size_t>(b)].push_back(next);
            if (next == eos || static_cast<int>(ids[static_cast<std::size_t>(b)].size()) >= cap)
                done[static_cast<std::size_t>(b)] = 1;
        }
    }
    return ids;
}

std::vector<std::vector<double>> numeric_readout(const Model<float>& m, const std::vector<const float*>& images,
                                                 const std::vector<std::vector<int>>& ids,
                                                 const tok::Vocabulary& vocab) {
    require(images.size() == ids.size(), Errc::length_mismatch, "images and streams differ in count");
    std::vector<std::vector<double>> out(ids.size());
    if (ids.empty()) return out;
    const int num_id = vocab.num_id;

    std::vector<TrainSample> samples(ids.size());
    std::vector<const TrainSample*> ptrs;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        samples[i].image.assign(images[i], images[i] + m.cfg.image_pixels);
        samples[i].ids = ids[i];
        ptrs.push_back(&samples[i]);
    }
    const std::size_t chunk = 256;
    for (std::size_t at = 0; at < ptrs.size(); at += chunk) {
        std::size_t hi = std::min(ptrs.size(), at + chunk);
        std::vector<const TrainSample*> part(ptrs.begin() + static_cast<std::ptrdiff_t>(at),
                                             ptrs.begin() + static_cast<std::ptrdiff_t>(hi));
        Batch batch = make_batch(m, part, vocab.pad_id);
        Eigen::VectorXf y;
        full_forward(m, batch, nullptr, &y);
        for (std::size_t i = at; i < hi; ++i) {
            const std::vector<int>& stream = ids[i];
            int ordinal = 0;
            for (std::size_t s = 0; s + 1 < stream.size(); ++s) {
                if (stream[s] != num_id) continue;
                Eigen::Index row = static_cast<Eigen::Index>(i - at) * batch.positions + static_cast<Eigen::Index>(s) + 1;
                int fam = m.cfg.slot_families > 0 ? std::min(ordinal, m.cfg.slot_families - 1) : 0;
                double mu = m.slot_mu.empty() ? 0.0 : m.slot_mu[static_cast<std::size_t>(fam)];
                double sigma = m.slot_sigma.empty() ? 1.0 : m.slot_sigma[static_cast<std::size_t>(fam)];
                out[i].push_back(mu + sigma * static_cast<double>(y(row)));
                ++ordinal;
            }
        }
    }
    return out;
}

// Checkpoints ---------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const Model<float>& m, const tok::Vocabulary& vocab,
                     const nlohmann::json& meta) {
    nlohmann::json header{{"config", m.cfg.to_json()},
                          {"slot_mu", m.slot_mu},
                          {"slot_sigma", m.slot_sigma},
                          {"vocab", vocab.tokens},
                          {"meta", meta}};
    std::string head = header.dump();

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), Errc::io_error, "cannot open " + tmp.string() + " for writing");
        auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
        auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
        out.write("DRCK", 4);
        put_u32(1);  // format version
        put_u64(head.size());
        out.write(head.data(), static_cast<std::streamsize>(head.size()));
        put_u64(m.params.size());
        out.write(reinterpret_cast<const char*>(m.params.data()),
                  static_cast<std::streamsize>(m.params.size() * sizeof(float)));
        require(out.good(), Errc::io_error, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, Errc::io_error, "cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Errc::io_error, "cannot open " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    require(in.good() && std::memcmp(magic, "DRCK", 4) == 0, Errc::data_error, "not a checkpoint: " + path.string());
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    require(in.good() && version == 1, Errc::data_error, "unsupported checkpoint version");
    std::uint64_t head_len = 0;
    in.read(reinterpret_cast<char*>(&head_len), 8);
    require(in.good() && head_len > 0 && head_len < (1ull << 30), Errc::data_error, "corrupt checkpoint header");
    std::string head(head_len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head_len));
    require(in.good(), Errc::data_error, "truncated checkpoint header");

    nlohmann::json header = nlohmann::json::parse(head, nullptr, false);
    require(!header.is_discarded(), Errc::data_error, "checkpoint header is not valid JSON");

    Checkpoint ck;
    ck.model.cfg = ModelConfig::from_json(header.at("config"));
    ck.model.specs = make_tensor_specs(ck.model.cfg);
    ck.model.slot_mu = header.at("slot_mu").get<std::vector<double>>();
    ck.model.slot_sigma = header.at("slot_sigma").get<std::vector<double>>();
    ck.meta = header.value("meta", nlohmann::json::object());
    std::vector<std::string> tokens = header.at("vocab").get<std::vector<std::string>>();
    ck.vocab = tok::Vocabulary::from_tokens(tokens);
    require(static_cast<int>(tokens.size()) == ck.model.cfg.vocab_size, Errc::data_error,
            "vocab size disagrees with config");

    std::size_t total = 0;
    for (const TensorSpec& s : ck.model.specs) total += s.size();
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 8);
    require(in.good() && count == total, Errc::data_error, "parameter count disagrees with config");
    ck.model.params.resize(total);
    in.read(reinterpret_cast<char*>(ck.model.params.data()), static_cast<std::streamsize>(total * sizeof(float)));
    require(in.good(), Errc::data_error, "truncated checkpoint parameters");
    return ck;
}

// Explicit instantiations ------------------------------------------------------------

template struct Model<float>;
template struct Model<double>;
template Model<float> init_model<float>(const ModelConfig&, std::uint64_t);
template Model<double> init_model<double>(const ModelConfig&, std::uint64_t);
template Batch make_batch<float>(const Model<float>&, const std::vector<const TrainSample*>&, int);
template Batch make_batch<double>(const Model<double>&, const std::vector<const TrainSample*>&, int);
template LossBreakdown compute_loss<float>(const Model<float>&, const Batch&, double, double);
template LossBreakdown compute_loss<double>(const Model<double>&, const Batch&, double, double);
template LossBreakdown compute_loss_and_grads<float>(const Model<float>&, const Batch&, AlignedVec<float>&, double,
                                                     double);
template LossBreakdown compute_loss_and_grads<double>(const Model<double>&, const Batch&, AlignedVec<double>&, double,
                                                      double);

}  // namespace derender::net
