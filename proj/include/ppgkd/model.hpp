#pragma once

// Model families: a patch transformer (pre-norm causal blocks over
// non-overlapping signal patches) and a flat MLP baseline, plus the learnable
// teacher-to-student adapter, parameter counting, and checkpoint I/O.

#include "ppgkd/datagen.hpp"
#include "ppgkd/rng.hpp"
#include "ppgkd/tensor.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ppgkd {

enum class ModelFamily : std::uint32_t { patch_transformer = 0, mlp = 1 };
enum class HeadType : std::uint32_t { regression = 0, classification = 1 };

struct ModelConfig {
  ModelFamily family = ModelFamily::patch_transformer;
  int input_len = 400;  // L
  int patch_len = 40;   // P
  int d = 64;           // patch feature dim / MLP hidden width
  int layers = 2;       // transformer blocks / MLP hidden layers
  int heads = 2;
  HeadType head = HeadType::regression;
  int num_classes = 2;

  int n_patches() const { return input_len / patch_len; }
  int out_dim() const { return head == HeadType::regression ? 1 : num_classes; }

  void validate() const {
    if (input_len < 1 || d < 1 || layers < 1)
      throw std::invalid_argument("ModelConfig: dims must be positive");
    if (family == ModelFamily::patch_transformer) {
      if (patch_len < 1) throw std::invalid_argument("ModelConfig: patch_len >= 1");
      if (input_len % patch_len != 0)
        throw std::invalid_argument("ModelConfig: input_len not divisible by patch_len");
      if (heads < 1 || d % heads != 0)
        throw std::invalid_argument("ModelConfig: d must be divisible by heads");
    }
    if (head == HeadType::classification && num_classes < 2)
      throw std::invalid_argument("ModelConfig: classification needs >= 2 classes");
  }
};

// Teacher/student shape presets; the pairing lands the parameter ratio near
// the targeted ~19x compression regime.
inline ModelConfig default_teacher_config(int input_len = 400,
                                          HeadType head = HeadType::regression) {
  ModelConfig c;
  c.family = ModelFamily::patch_transformer;
  c.input_len = input_len;
  c.patch_len = 40;
  c.d = 256;
  c.layers = 8;
  c.heads = 4;
  c.head = head;
  return c;
}

inline ModelConfig default_student_config(int input_len = 400,
                                          HeadType head = HeadType::regression) {
  ModelConfig c;
  c.family = ModelFamily::patch_transformer;
  c.input_len = input_len;
  c.patch_len = 40;
  c.d = 64;
  c.layers = 7;
  c.heads = 2;
  c.head = head;
  return c;
}

// ---- patchify ---------------------------------------------------------------

enum class PatchMode { strict, truncate };

template <class S>
struct PatchSequence {
  ad::Mat<S> patches;  // N x P, row i = samples[i*P, (i+1)*P)
  int patch_len = 0;
  int count = 0;
};

template <class S = double>
PatchSequence<S> patchify(const std::vector<double>& samples, int patch_len,
                          PatchMode mode = PatchMode::strict) {
  if (patch_len < 1) throw std::invalid_argument("patchify: patch_len >= 1");
  const std::size_t len = samples.size();
  if (mode == PatchMode::strict && len % static_cast<std::size_t>(patch_len) != 0)
    throw std::invalid_argument("patchify: signal length not divisible by patch length");
  const int n = static_cast<int>(len / static_cast<std::size_t>(patch_len));
  if (n < 1) throw std::invalid_argument("patchify: signal shorter than one patch");
  PatchSequence<S> out;
  out.patch_len = patch_len;
  out.count = n;
  out.patches.resize(n, patch_len);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < patch_len; ++j)
      out.patches(i, j) = static_cast<S>(
          samples[static_cast<std::size_t>(i) * patch_len + j]);
  return out;
}

// Batch of signals (BxL) -> stacked patch matrix ((B*N)xP), strict mode.
template <class S>
ad::Mat<S> patchify_batch(const ad::Mat<S>& signals, int patch_len) {
  const Eigen::Index bsz = signals.rows(), len = signals.cols();
  if (patch_len < 1 || len % patch_len != 0)
    throw std::invalid_argument("patchify_batch: length not divisible by patch length");
  const Eigen::Index n = len / patch_len;
  ad::Mat<S> out(bsz * n, patch_len);
  for (Eigen::Index b = 0; b < bsz; ++b)
    for (Eigen::Index i = 0; i < n; ++i)
      out.row(b * n + i) = signals.row(b).segment(i * patch_len, patch_len);
  return out;
}

// ---- model interface --------------------------------------------------------

// Autodiff outputs for one forward pass over a batch of B signals.
template <class S>
struct ForwardResult {
  ad::Var<S> patch_features;  // (B*N)xd, undefined for the MLP
  ad::Var<S> pooled;          // Bxd
  ad::Var<S> prediction;      // Bx1 or BxC
  int batch = 0;
  int n_patches = 0;
  bool has_patches() const { return patch_features.defined(); }
};

// Plain-value outputs (no graph attached).
template <class S>
struct BatchOutput {
  ad::Mat<S> patch_features;  // (B*N)xd or empty
  ad::Mat<S> pooled;          // Bxd
  ad::Mat<S> prediction;      // Bx1 or BxC
  int batch = 0;
  int n_patches = 0;
  bool has_patches() const { return patch_features.size() > 0; }
};

template <class S>
class Model {
 public:
  virtual ~Model() = default;

  const ModelConfig& config() const { return cfg_; }

  virtual ForwardResult<S> forward_ad(const ad::Mat<S>& signals) = 0;

  BatchOutput<S> forward(const ad::Mat<S>& signals) {
    ad::NoGradGuard ng;
    ForwardResult<S> r = forward_ad(signals);
    BatchOutput<S> out;
    if (r.has_patches()) out.patch_features = r.patch_features.value();
    out.pooled = r.pooled.value();
    out.prediction = r.prediction.value();
    out.batch = r.batch;
    out.n_patches = r.n_patches;
    return out;
  }

  std::vector<std::pair<std::string, ad::Var<S>>>& params() { return params_; }
  const std::vector<std::pair<std::string, ad::Var<S>>>& params() const {
    return params_;
  }

  void set_trainable(bool on) {
    for (auto& [name, p] : params_) p.node()->requires_grad = on;
  }
  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

 protected:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  ad::Var<S> add_param(const std::string& name, ad::Mat<S> init) {
    params_.emplace_back(name, ad::Var<S>::param(std::move(init)));
    return params_.back().second;
  }

  void check_input(const ad::Mat<S>& signals) const {
    if (signals.cols() != cfg_.input_len)
      throw std::invalid_argument("forward: signal length does not match model input_len");
    if (signals.rows() < 1) throw std::invalid_argument("forward: empty batch");
  }

  static ad::Mat<S> normal_init(Rng& rng, Eigen::Index r, Eigen::Index c, double std_dev) {
    ad::Mat<S> m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j)
        m(i, j) = static_cast<S>(std_dev * rng.normal());
    return m;
  }

  ModelConfig cfg_;
  std::vector<std::pair<std::string, ad::Var<S>>> params_;
};

// ---- patch transformer ------------------------------------------------------

template <class S>
class PatchTransformer final : public Model<S> {
  using Base = Model<S>;
  using Base::add_param;
  using Base::cfg_;

 public:
  PatchTransformer(const ModelConfig& cfg, Rng& rng) : Base(cfg) {
    if (cfg_.family != ModelFamily::patch_transformer)
      throw std::invalid_argument("PatchTransformer: wrong family in config");
    const int d = cfg_.d, n = cfg_.n_patches();
    w_embed_ = add_param("embed.w", Base::normal_init(rng, cfg_.patch_len, d, 0.02));
    b_embed_ = add_param("embed.b", ad::Mat<S>::Zero(1, d));
    pos_ = add_param("pos", Base::normal_init(rng, n, d, 0.02));
    blocks_.resize(static_cast<std::size_t>(cfg_.layers));
    for (int l = 0; l < cfg_.layers; ++l) {
      auto tag = [l](const char* s) {
        return "block" + std::to_string(l) + "." + s;
      };
      auto& bl = blocks_[static_cast<std::size_t>(l)];
      bl.ln1_g = add_param(tag("ln1.g"), ad::Mat<S>::Ones(1, d));
      bl.ln1_b = add_param(tag("ln1.b"), ad::Mat<S>::Zero(1, d));
      bl.wq = add_param(tag("attn.wq"), Base::normal_init(rng, d, d, 0.02));
      bl.bq = add_param(tag("attn.bq"), ad::Mat<S>::Zero(1, d));
      bl.wk = add_param(tag("attn.wk"), Base::normal_init(rng, d, d, 0.02));
      bl.bk = add_param(tag("attn.bk"), ad::Mat<S>::Zero(1, d));
      bl.wv = add_param(tag("attn.wv"), Base::normal_init(rng, d, d, 0.02));
      bl.bv = add_param(tag("attn.bv"), ad::Mat<S>::Zero(1, d));
      bl.wo = add_param(tag("attn.wo"), Base::normal_init(rng, d, d, 0.02));
      bl.bo = add_param(tag("attn.bo"), ad::Mat<S>::Zero(1, d));
      bl.ln2_g = add_param(tag("ln2.g"), ad::Mat<S>::Ones(1, d));
      bl.ln2_b = add_param(tag("ln2.b"), ad::Mat<S>::Zero(1, d));
      bl.w1 = add_param(tag("ffn.w1"), Base::normal_init(rng, d, 4 * d, 0.02));
      bl.b1 = add_param(tag("ffn.b1"), ad::Mat<S>::Zero(1, 4 * d));
      bl.w2 = add_param(tag("ffn.w2"), Base::normal_init(rng, 4 * d, d, 0.02));
      bl.b2 = add_param(tag("ffn.b2"), ad::Mat<S>::Zero(1, d));
    }
    w_head_ = add_param("head.w", Base::normal_init(rng, d, cfg_.out_dim(), 0.02));
    b_head_ = add_param("head.b", ad::Mat<S>::Zero(1, cfg_.out_dim()));
  }

  ForwardResult<S> forward_ad(const ad::Mat<S>& signals) override {
    Base::check_input(signals);
    const int bsz = static_cast<int>(signals.rows());
    const int n = cfg_.n_patches();

    ad::Var<S> x = ad::Var<S>::constant(patchify_batch(signals, cfg_.patch_len));
    ad::Var<S> h = ad::add_rowvec(ad::matmul(x, w_embed_), b_embed_);
    h = ad::add_block_rows(h, pos_, bsz);
    for (auto& bl : blocks_) {
      ad::Var<S> a_in = ad::layer_norm_rows(h, bl.ln1_g, bl.ln1_b);
      ad::Var<S> q = ad::add_rowvec(ad::matmul(a_in, bl.wq), bl.bq);
      ad::Var<S> k = ad::add_rowvec(ad::matmul(a_in, bl.wk), bl.bk);
      ad::Var<S> v = ad::add_rowvec(ad::matmul(a_in, bl.wv), bl.bv);
      ad::Var<S> att = ad::causal_self_attention(q, k, v, bsz, cfg_.heads);
      h = ad::add(h, ad::add_rowvec(ad::matmul(att, bl.wo), bl.bo));
      ad::Var<S> f_in = ad::layer_norm_rows(h, bl.ln2_g, bl.ln2_b);
      ad::Var<S> f =
          ad::gelu(ad::add_rowvec(ad::matmul(f_in, bl.w1), bl.b1));
      h = ad::add(h, ad::add_rowvec(ad::matmul(f, bl.w2), bl.b2));
    }

    ForwardResult<S> out;
    out.patch_features = h;
    out.pooled = ad::mean_rows_per_block(h, bsz);
    out.prediction = ad::add_rowvec(ad::matmul(out.pooled, w_head_), b_head_);
    out.batch = bsz;
    out.n_patches = n;
    return out;
  }

 private:
  struct BlockParams {
    ad::Var<S> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    ad::Var<S> ln2_g, ln2_b, w1, b1, w2, b2;
  };
  ad::Var<S> w_embed_, b_embed_, pos_, w_head_, b_head_;
  std::vector<BlockParams> blocks_;
};

// ---- MLP baseline -----------------------------------------------------------

template <class S>
class Mlp final : public Model<S> {
  using Base = Model<S>;
  using Base::add_param;
  using Base::cfg_;

 public:
  Mlp(const ModelConfig& cfg, Rng& rng) : Base(cfg) {
    if (cfg_.family != ModelFamily::mlp)
      throw std::invalid_argument("Mlp: wrong family in config");
    int in = cfg_.input_len;
    for (int l = 0; l < cfg_.layers; ++l) {
      ws_.push_back(add_param("fc" + std::to_string(l) + ".w",
                              Base::normal_init(rng, in, cfg_.d,
                                                1.0 / std::sqrt(double(in)))));
      bs_.push_back(add_param("fc" + std::to_string(l) + ".b",
                              ad::Mat<S>::Zero(1, cfg_.d)));
      in = cfg_.d;
    }
    w_head_ = add_param("head.w", Base::normal_init(rng, cfg_.d, cfg_.out_dim(),
                                                    1.0 / std::sqrt(double(cfg_.d))));
    b_head_ = add_param("head.b", ad::Mat<S>::Zero(1, cfg_.out_dim()));
  }

  ForwardResult<S> forward_ad(const ad::Mat<S>& signals) override {
    Base::check_input(signals);
    // flat signal is z-scored per row before the first layer
    ad::Mat<S> x = signals;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      S mu = x.row(i).mean();
      S sd = S(std::sqrt(double((x.row(i).array() - mu).square().mean())));
      if (double(sd) > 1e-12)
        x.row(i) = ((x.row(i).array() - mu) / sd).matrix();
      else
        x.row(i).setZero();
    }
    ad::Var<S> h = ad::Var<S>::constant(std::move(x));
    for (std::size_t l = 0; l < ws_.size(); ++l)
      h = ad::gelu(ad::add_rowvec(ad::matmul(h, ws_[l]), bs_[l]));

    ForwardResult<S> out;
    out.pooled = h;  // last hidden activation
    out.prediction = ad::add_rowvec(ad::matmul(h, w_head_), b_head_);
    out.batch = static_cast<int>(signals.rows());
    out.n_patches = 0;
    return out;
  }

 private:
  std::vector<ad::Var<S>> ws_, bs_;
  ad::Var<S> w_head_, b_head_;
};

template <class S>
std::unique_ptr<Model<S>> make_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.family == ModelFamily::patch_transformer)
    return std::make_unique<PatchTransformer<S>>(cfg, rng);
  return std::make_unique<Mlp<S>>(cfg, rng);
}

template <class S>
std::unique_ptr<Model<S>> make_model(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "model-init"));
  return make_model<S>(cfg, rng);
}

// ---- adapter ----------------------------------------------------------------

// Shared learnable linear map from teacher feature dim to student feature
// dim, applied as a pure matrix product (no bias).
template <class S>
struct Adapter {
  ad::Var<S> weights;  // d_t x d_s

  Adapter() = default;
  Adapter(int d_t, int d_s, Rng& rng) {
    if (d_t < 1 || d_s < 1) throw std::invalid_argument("Adapter: bad dims");
    ad::Mat<S> w(d_t, d_s);
    const double std_dev = 1.0 / std::sqrt(double(d_t));
    for (int i = 0; i < d_t; ++i)
      for (int j = 0; j < d_s; ++j) w(i, j) = static_cast<S>(std_dev * rng.normal());
    weights = ad::Var<S>::param(std::move(w));
  }
  static Adapter identity(int d) {
    Adapter a;
    a.weights = ad::Var<S>::param(ad::Mat<S>::Identity(d, d));
    return a;
  }
};

template <class S>
ad::Var<S> adapt(const ad::Var<S>& teacher_patch_features, const Adapter<S>& adapter) {
  if (teacher_patch_features.cols() != adapter.weights.rows())
    throw std::invalid_argument("adapt: feature dim does not match adapter");
  return ad::matmul(teacher_patch_features, adapter.weights);
}

template <class S>
ad::Mat<S> adapt(const ad::Mat<S>& teacher_patch_features, const ad::Mat<S>& adapter_w) {
  if (teacher_patch_features.cols() != adapter_w.rows())
    throw std::invalid_argument("adapt: feature dim does not match adapter");
  return teacher_patch_features * adapter_w;
}

// ---- parameter counting -----------------------------------------------------

template <class S>
std::int64_t count_params(const Model<S>& model) {
  std::int64_t total = 0;
  for (const auto& [name, p] : model.params()) total += p.value().size();
  return total;
}

template <class S>
std::int64_t count_params(const Model<S>& model, const Adapter<S>& adapter) {
  return count_params(model) + adapter.weights.value().size();
}

// ---- checkpoints -------------------------------------------------------------
//
// Binary, little-endian: magic "PPGC", u32 version=1, u32 scalar bytes, the
// ModelConfig fields, then each parameter as (name, rows, cols, row-major
// scalar data). Carrying the full config makes a checkpoint self-describing.

namespace detail {

inline void ck_put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t ck_get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError(IoError::Kind::truncated, "checkpoint: truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

template <class S>
void save_checkpoint(const Model<S>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(IoError::Kind::open_failed, "save_checkpoint: cannot open " + path);
  out.write("PPGC", 4);
  detail::ck_put_u32(out, 1u);
  detail::ck_put_u32(out, static_cast<std::uint32_t>(sizeof(S)));
  const ModelConfig& c = model.config();
  detail::ck_put_u32(out, static_cast<std::uint32_t>(c.family));
  detail::ck_put_u32(out, static_cast<std::uint32_t>(c.input_len));
  detail::ck_put_u32(out, static_cast<std::uint32_t>(c.patch_len));
  detail::ck_put_u32(out, static_cast<std::uint32_t>(c.d));
  detail::ck_put_u32(out, static_cast<std::uint32_t>(c.layers));
  detail::ck_put_u32(out, static_cast<std::uint32_t>(c.heads));
  detail::ck_put_u32(out, static_cast<std::uint32_t>(c.head));
  detail::ck_put_u32(out, static_cast<std::uint32_t>(c.num_classes));
  detail::ck_put_u32(out, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& [name, p] : model.params()) {
    detail::ck_put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::ck_put_u32(out, static_cast<std::uint32_t>(p.value().rows()));
    detail::ck_put_u32(out, static_cast<std::uint32_t>(p.value().cols()));
    for (Eigen::Index i = 0; i < p.value().rows(); ++i)
      for (Eigen::Index j = 0; j < p.value().cols(); ++j) {
        S v = p.value()(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof(S));
      }
  }
  if (!out)
    throw IoError(IoError::Kind::open_failed, "save_checkpoint: write failed");
}

template <class S>
std::unique_ptr<Model<S>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(IoError::Kind::open_failed, "load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PPGC", 4) != 0)
    throw IoError(IoError::Kind::bad_magic, "load_checkpoint: bad magic");
  if (detail::ck_get_u32(in) != 1)
    throw IoError(IoError::Kind::bad_version, "load_checkpoint: unsupported version");
  if (detail::ck_get_u32(in) != sizeof(S))
    throw IoError(IoError::Kind::bad_header,
                  "load_checkpoint: scalar width mismatch");
  ModelConfig c;
  c.family = static_cast<ModelFamily>(detail::ck_get_u32(in));
  c.input_len = static_cast<int>(detail::ck_get_u32(in));
  c.patch_len = static_cast<int>(detail::ck_get_u32(in));
  c.d = static_cast<int>(detail::ck_get_u32(in));
  c.layers = static_cast<int>(detail::ck_get_u32(in));
  c.heads = static_cast<int>(detail::ck_get_u32(in));
  c.head = static_cast<HeadType>(detail::ck_get_u32(in));
  c.num_classes = static_cast<int>(detail::ck_get_u32(in));

  Rng dummy(0);
  auto model = make_model<S>(c, dummy);
  const std::uint32_t n_params = detail::ck_get_u32(in);
  if (n_params != model->params().size())
    throw IoError(IoError::Kind::bad_header, "load_checkpoint: parameter count mismatch");
  for (auto& [name, p] : model->params()) {
    const std::uint32_t name_len = detail::ck_get_u32(in);
    std::string stored(name_len, '\0');
    in.read(stored.data(), name_len);
    const std::uint32_t rows = detail::ck_get_u32(in);
    const std::uint32_t cols = detail::ck_get_u32(in);
    if (!in || stored != name || rows != p.value().rows() || cols != p.value().cols())
      throw IoError(IoError::Kind::bad_header,
                    "load_checkpoint: parameter layout mismatch at " + name);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) {
        S v;
        in.read(reinterpret_cast<char*>(&v), sizeof(S));
        p.value()(i, j) = v;
      }
    if (!in) throw IoError(IoError::Kind::truncated, "load_checkpoint: truncated");
  }
  return model;
}

}  // namespace ppgkd
