// Copyright 2026 the iasr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iasr/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace iasr {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kMaskNegInf = -1e9;
constexpr int kBosId = 1;
constexpr int kEotId = 2;
constexpr char kMagic[9] = "iasrmdl1";

Mat ln_rows(const Mat& x, const Mat& g, const Mat& b) {
  Mat out(x.rows(), x.cols());
  const double cols = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().sum() / cols;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    out.row(r) = (((x.row(r).array() - mu) * inv) * g.row(0).array()) +
                 b.row(0).array();
  }
  return out;
}

Mat gelu_mat(const Mat& x) {
  constexpr double c = 0.7978845608028654;
  constexpr double a = 0.044715;
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double v = x(r, j);
      out(r, j) = 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v)));
    }
  }
  return out;
}

void softmax_rows_inplace(Mat& x) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    Eigen::RowVectorXd e = (x.row(r).array() - m).exp();
    x.row(r) = e / e.sum();
  }
}

Mat causal_mask(int n) {
  Mat m = Mat::Zero(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = r + 1; c < n; ++c) {
      m(r, c) = kMaskNegInf;
    }
  }
  return m;
}

struct AttnW {
  const Mat* wq;
  const Mat* bq;
  const Mat* wk;
  const Mat* bk;
  const Mat* wv;
  const Mat* bv;
  const Mat* wo;
  const Mat* bo;
};

Mat mha_full(const Mat& q_in, const Mat& kv_in, const AttnW& w, int heads) {
  const int hidden = static_cast<int>(w.wq->cols());
  const int dk = hidden / heads;
  Mat q = q_in * *w.wq;
  q.rowwise() += w.bq->row(0);
  Mat k = kv_in * *w.wk;
  k.rowwise() += w.bk->row(0);
  Mat v = kv_in * *w.wv;
  v.rowwise() += w.bv->row(0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Mat ctx(q_in.rows(), hidden);
  for (int h = 0; h < heads; ++h) {
    Mat scores = q.middleCols(h * dk, dk) *
                 k.middleCols(h * dk, dk).transpose() * scale;
    softmax_rows_inplace(scores);
    ctx.middleCols(h * dk, dk) = scores * v.middleCols(h * dk, dk);
  }
  Mat out = ctx * *w.wo;
  out.rowwise() += w.bo->row(0);
  return out;
}

Var tape_attention(Tape& t, Var q_in, Var kv_in, int heads, int dk, Var wq,
                   Var bq, Var wk, Var bk, Var wv, Var bv, Var wo, Var bo,
                   const Mat* mask) {
  Var q = t.add_rowvec(t.matmul(q_in, wq), bq);
  Var k = t.add_rowvec(t.matmul(kv_in, wk), bk);
  Var v = t.add_rowvec(t.matmul(kv_in, wv), bv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Var ctx{-1};
  for (int h = 0; h < heads; ++h) {
    Var qh = t.slice_cols(q, h * dk, dk);
    Var kh = t.slice_cols(k, h * dk, dk);
    Var vh = t.slice_cols(v, h * dk, dk);
    Var scores = t.scale(t.matmul(qh, t.transpose(kh)), scale);
    if (mask != nullptr) {
      scores = t.add(scores, t.constant(*mask));
    }
    Var ch = t.matmul(t.softmax_rows(scores), vh);
    ctx = (h == 0) ? ch : t.concat_cols(ctx, ch);
  }
  return t.add_rowvec(t.matmul(ctx, wo), bo);
}

Var maybe_dropout(Tape& t, Var x, double p, Rng* rng) {
  if (rng == nullptr || p <= 0.0) {
    return x;
  }
  const Mat& v = t.value(x);
  const double keep = 1.0 - p;
  Mat mask(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      mask(r, c) = (rng->uniform() < p) ? 0.0 : 1.0 / keep;
    }
  }
  return t.hadamard(x, t.constant(mask));
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) {
    throw std::runtime_error("truncated model file");
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void ModelConfig::validate() const {
  if (feature_dim < 1 || hidden < 1 || heads < 1 || enc_layers < 1 ||
      dec_layers < 1 || ffn < 1 || subsample < 1 || max_target_len < 1) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (hidden % heads != 0) {
    throw std::invalid_argument("hidden size must be divisible by heads");
  }
  if (vocab < 4) {
    throw std::invalid_argument("vocab must cover the special tokens");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("dropout must be in [0, 1)");
  }
}

bool ModelConfig::operator==(const ModelConfig& o) const {
  return feature_dim == o.feature_dim && hidden == o.hidden &&
         heads == o.heads && enc_layers == o.enc_layers &&
         dec_layers == o.dec_layers && ffn == o.ffn && vocab == o.vocab &&
         subsample == o.subsample && max_target_len == o.max_target_len &&
         dropout == o.dropout;
}

Mat sinusoidal_positions(int rows, int dim, int offset) {
  Mat pe(rows, dim);
  for (int r = 0; r < rows; ++r) {
    const double pos = static_cast<double>(r + offset);
    for (int j = 0; j < dim; j += 2) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(dim));
      pe(r, j) = std::sin(pos * freq);
      if (j + 1 < dim) {
        pe(r, j + 1) = std::cos(pos * freq);
      }
    }
  }
  return pe;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  register_params(seed);
}

void Model::register_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  const int D = cfg_.feature_dim;
  const int H = cfg_.hidden;
  const int F = cfg_.ffn;
  const int V = cfg_.vocab;

  auto add = [this, &rng](const std::string& name, int r, int c, char kind) {
    Mat m(r, c);
    switch (kind) {
      case 'x': {
        const double lim = std::sqrt(6.0 / static_cast<double>(r + c));
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) {
            m(i, j) = (rng.uniform() * 2.0 - 1.0) * lim;
          }
        }
        break;
      }
      case 'g': {
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) {
            m(i, j) = rng.gaussian() * 0.02;
          }
        }
        break;
      }
      case 'z':
        m.setZero();
        break;
      case 'o':
        m.setOnes();
        break;
      default:
        throw std::logic_error("unknown init kind");
    }
    idx_[name] = static_cast<int>(params_.size());
    params_.push_back(Parameter{name, std::move(m)});
  };

  auto add_ln_h = [&add, H](const std::string& pre) {
    add(pre + "_g", 1, H, 'o');
    add(pre + "_b", 1, H, 'z');
  };
  auto add_attn = [&add, H](const std::string& pre) {
    add(pre + "wq", H, H, 'x');
    add(pre + "bq", 1, H, 'z');
    add(pre + "wk", H, H, 'x');
    add(pre + "bk", 1, H, 'z');
    add(pre + "wv", H, H, 'x');
    add(pre + "bv", 1, H, 'z');
    add(pre + "wo", H, H, 'x');
    add(pre + "bo", 1, H, 'z');
  };
  auto add_ffn = [&add, H, F](const std::string& pre) {
    add(pre + "ffn_w1", H, F, 'x');
    add(pre + "ffn_b1", 1, F, 'z');
    add(pre + "ffn_w2", F, H, 'x');
    add(pre + "ffn_b2", 1, H, 'z');
  };

  add("enc_in_w", D, H, 'x');
  add("enc_in_b", 1, H, 'z');
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    const std::string pre = "enc" + std::to_string(l) + "_";
    add_ln_h(pre + "ln1");
    add_attn(pre);
    add_ln_h(pre + "ln2");
    add_ffn(pre);
  }
  add_ln_h("enc_lnf");
  add("embed", V, H, 'g');
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    const std::string pre = "dec" + std::to_string(l) + "_";
    add_ln_h(pre + "ln1");
    add_attn(pre + "self_");
    add_ln_h(pre + "ln2");
    add_attn(pre + "cross_");
    add_ln_h(pre + "ln3");
    add_ffn(pre);
  }
  add_ln_h("dec_lnf");
  add("out_w", H, V, 'x');
  add("out_b", 1, V, 'z');
}

const Mat& Model::p(const std::string& name) const {
  return params_[static_cast<std::size_t>(index_of(name))].value;
}

int Model::index_of(const std::string& name) const {
  auto it = idx_.find(name);
  if (it == idx_.end()) {
    throw std::logic_error("unknown parameter: " + name);
  }
  return it->second;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const Parameter& prm : params_) {
    n += static_cast<std::size_t>(prm.value.size());
  }
  return n;
}

std::uint64_t Model::weights_hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const Parameter& prm : params_) {
    h = fnv1a64_bytes(prm.name.data(), prm.name.size(), h);
    const std::uint64_t dims[2] = {
        static_cast<std::uint64_t>(prm.value.rows()),
        static_cast<std::uint64_t>(prm.value.cols())};
    h = fnv1a64_bytes(dims, sizeof(dims), h);
    h = fnv1a64_bytes(prm.value.data(),
                      sizeof(double) * static_cast<std::size_t>(
                                           prm.value.size()),
                      h);
  }
  return h;
}

LossGraph Model::build_loss(const FeatMat& features,
                            const std::vector<int>& decoder_inputs,
                            const std::vector<int>& labels,
                            const std::vector<double>& mask,
                            Rng* train_rng) const {
  if (features.rows() < 1 || features.cols() != cfg_.feature_dim) {
    throw std::invalid_argument("bad feature shape for this model");
  }
  if (decoder_inputs.empty() || decoder_inputs.size() != labels.size() ||
      labels.size() != mask.size()) {
    throw std::invalid_argument("decoder inputs/labels/mask length mismatch");
  }
  if (decoder_inputs.size() > static_cast<std::size_t>(cfg_.max_target_len)) {
    throw std::invalid_argument("decoder sequence exceeds max_target_len");
  }
  for (int id : decoder_inputs) {
    if (id < 0 || id >= cfg_.vocab) {
      throw std::out_of_range("decoder input token out of vocab range");
    }
  }
  for (int id : labels) {
    if (id < 0 || id >= cfg_.vocab) {
      throw std::out_of_range("label token out of vocab range");
    }
  }
  double mask_sum = 0.0;
  for (double m : mask) mask_sum += m;
  if (!(mask_sum > 0.0)) {
    throw std::invalid_argument("loss mask selects no positions");
  }

  LossGraph g;
  g.tape = std::make_unique<Tape>();
  Tape& t = *g.tape;
  g.param_vars.reserve(params_.size());
  for (const Parameter& prm : params_) {
    g.param_vars.push_back(t.leaf(prm.value, true));
  }
  auto P = [this, &g](const std::string& name) {
    return g.param_vars[static_cast<std::size_t>(index_of(name))];
  };
  const int heads = cfg_.heads;
  const int dk = cfg_.hidden / heads;
  const double drop = cfg_.dropout;

  // Encoder.
  Var x = t.constant(features.cast<double>());
  x = t.add_rowvec(t.matmul(x, P("enc_in_w")), P("enc_in_b"));
  x = t.avg_pool_rows(x, cfg_.subsample);
  const int enc_rows = static_cast<int>(t.value(x).rows());
  x = t.add(x, t.constant(sinusoidal_positions(enc_rows, cfg_.hidden)));
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    const std::string pre = "enc" + std::to_string(l) + "_";
    Var h = t.layernorm(x, P(pre + "ln1_g"), P(pre + "ln1_b"), kLnEps);
    Var a = tape_attention(t, h, h, heads, dk, P(pre + "wq"), P(pre + "bq"),
                           P(pre + "wk"), P(pre + "bk"), P(pre + "wv"),
                           P(pre + "bv"), P(pre + "wo"), P(pre + "bo"),
                           nullptr);
    x = t.add(x, maybe_dropout(t, a, drop, train_rng));
    Var h2 = t.layernorm(x, P(pre + "ln2_g"), P(pre + "ln2_b"), kLnEps);
    Var f = t.add_rowvec(
        t.matmul(t.gelu(t.add_rowvec(t.matmul(h2, P(pre + "ffn_w1")),
                                     P(pre + "ffn_b1"))),
                 P(pre + "ffn_w2")),
        P(pre + "ffn_b2"));
    x = t.add(x, maybe_dropout(t, f, drop, train_rng));
  }
  Var memory = t.layernorm(x, P("enc_lnf_g"), P("enc_lnf_b"), kLnEps);

  // Decoder.
  const int n = static_cast<int>(decoder_inputs.size());
  Var y = t.gather_rows(P("embed"), decoder_inputs);
  y = t.add(y, t.constant(sinusoidal_positions(n, cfg_.hidden)));
  const Mat mask_mat = causal_mask(n);
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    const std::string pre = "dec" + std::to_string(l) + "_";
    Var h = t.layernorm(y, P(pre + "ln1_g"), P(pre + "ln1_b"), kLnEps);
    Var a = tape_attention(
        t, h, h, heads, dk, P(pre + "self_wq"), P(pre + "self_bq"),
        P(pre + "self_wk"), P(pre + "self_bk"), P(pre + "self_wv"),
        P(pre + "self_bv"), P(pre + "self_wo"), P(pre + "self_bo"), &mask_mat);
    y = t.add(y, maybe_dropout(t, a, drop, train_rng));
    Var h2 = t.layernorm(y, P(pre + "ln2_g"), P(pre + "ln2_b"), kLnEps);
    Var c = tape_attention(t, h2, memory, heads, dk, P(pre + "cross_wq"),
                           P(pre + "cross_bq"), P(pre + "cross_wk"),
                           P(pre + "cross_bk"), P(pre + "cross_wv"),
                           P(pre + "cross_bv"), P(pre + "cross_wo"),
                           P(pre + "cross_bo"), nullptr);
    y = t.add(y, maybe_dropout(t, c, drop, train_rng));
    Var h3 = t.layernorm(y, P(pre + "ln3_g"), P(pre + "ln3_b"), kLnEps);
    Var f = t.add_rowvec(
        t.matmul(t.gelu(t.add_rowvec(t.matmul(h3, P(pre + "ffn_w1")),
                                     P(pre + "ffn_b1"))),
                 P(pre + "ffn_w2")),
        P(pre + "ffn_b2"));
    y = t.add(y, maybe_dropout(t, f, drop, train_rng));
  }
  Var hf = t.layernorm(y, P("dec_lnf_g"), P("dec_lnf_b"), kLnEps);
  Var logits = t.add_rowvec(t.matmul(hf, P("out_w")), P("out_b"));
  Var logp = t.log_softmax_rows(logits);
  g.loss = t.masked_mean_nll(logp, labels, mask);
  return g;
}

LossGraph Model::build_composed_loss(const FeatMat& features,
                                     const std::vector<int>& composed,
                                     bool target_only, Rng* train_rng) const {
  if (composed.empty()) {
    throw std::invalid_argument("composed sequence must not be empty");
  }
  std::vector<int> inputs;
  inputs.reserve(composed.size());
  inputs.push_back(kBosId);
  inputs.insert(inputs.end(), composed.begin(), composed.end() - 1);
  const std::vector<int>& labels = composed;
  std::vector<double> mask(labels.size(), 1.0);
  if (target_only) {
    std::size_t k = composed.size();
    for (std::size_t i = 0; i < composed.size(); ++i) {
      if (composed[i] == kEotId) {
        k = i;
        break;
      }
    }
    if (k == composed.size()) {
      throw std::invalid_argument(
          "target-only loss needs a separator token in the sequence");
    }
    for (std::size_t j = 0; j <= k && j < mask.size(); ++j) {
      mask[j] = 0.0;
    }
    if (k + 1 >= mask.size()) {
      throw std::invalid_argument(
          "target-only loss has no positions after the separator");
    }
  }
  return build_loss(features, inputs, labels, mask, train_rng);
}

Mat Model::encode(const FeatMat& features) const {
  if (features.rows() < 1 || features.cols() != cfg_.feature_dim) {
    throw std::invalid_argument("bad feature shape for this model");
  }
  Mat x = features.cast<double>() * p("enc_in_w");
  x.rowwise() += p("enc_in_b").row(0);
  const int rows = static_cast<int>(x.rows());
  const int sub = cfg_.subsample;
  const int out_rows = (rows + sub - 1) / sub;
  Mat pooled(out_rows, cfg_.hidden);
  for (int r = 0; r < out_rows; ++r) {
    const int start = r * sub;
    const int len = std::min(sub, rows - start);
    pooled.row(r) = x.middleRows(start, len).colwise().mean();
  }
  pooled += sinusoidal_positions(out_rows, cfg_.hidden);
  auto aw = [this](const std::string& pre) {
    return AttnW{&p(pre + "wq"), &p(pre + "bq"), &p(pre + "wk"),
                 &p(pre + "bk"), &p(pre + "wv"), &p(pre + "bv"),
                 &p(pre + "wo"), &p(pre + "bo")};
  };
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    const std::string pre = "enc" + std::to_string(l) + "_";
    Mat h = ln_rows(pooled, p(pre + "ln1_g"), p(pre + "ln1_b"));
    pooled += mha_full(h, h, aw(pre), cfg_.heads);
    Mat h2 = ln_rows(pooled, p(pre + "ln2_g"), p(pre + "ln2_b"));
    Mat f = gelu_mat((h2 * p(pre + "ffn_w1")).rowwise() +
                     p(pre + "ffn_b1").row(0)) *
            p(pre + "ffn_w2");
    f.rowwise() += p(pre + "ffn_b2").row(0);
    pooled += f;
  }
  return ln_rows(pooled, p("enc_lnf_g"), p("enc_lnf_b"));
}

DecodeState Model::begin_decode(const Mat& memory) const {
  if (memory.cols() != cfg_.hidden) {
    throw std::invalid_argument("memory width does not match hidden size");
  }
  DecodeState st;
  st.self_k.assign(static_cast<std::size_t>(cfg_.dec_layers),
                   Mat(0, cfg_.hidden));
  st.self_v.assign(static_cast<std::size_t>(cfg_.dec_layers),
                   Mat(0, cfg_.hidden));
  st.cross_k.reserve(static_cast<std::size_t>(cfg_.dec_layers));
  st.cross_v.reserve(static_cast<std::size_t>(cfg_.dec_layers));
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    const std::string pre = "dec" + std::to_string(l) + "_cross_";
    Mat k = memory * p(pre + "wk");
    k.rowwise() += p(pre + "bk").row(0);
    Mat v = memory * p(pre + "wv");
    v.rowwise() += p(pre + "bv").row(0);
    st.cross_k.push_back(std::move(k));
    st.cross_v.push_back(std::move(v));
  }
  return st;
}

Eigen::RowVectorXd Model::step_log_probs(DecodeState& st, int token) const {
  if (token < 0 || token >= cfg_.vocab) {
    throw std::out_of_range("decode token out of vocab range");
  }
  if (st.self_k.size() != static_cast<std::size_t>(cfg_.dec_layers)) {
    throw std::invalid_argument("decode state does not match this model");
  }
  const int H = cfg_.hidden;
  const int heads = cfg_.heads;
  const int dk = H / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Mat x = p("embed").row(token) +
          sinusoidal_positions(1, H, st.steps).row(0);
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    const std::string pre = "dec" + std::to_string(l) + "_";
    const std::string sp = pre + "self_";
    Mat h = ln_rows(x, p(pre + "ln1_g"), p(pre + "ln1_b"));
    Mat q = h * p(sp + "wq");
    q.rowwise() += p(sp + "bq").row(0);
    Mat k = h * p(sp + "wk");
    k.rowwise() += p(sp + "bk").row(0);
    Mat v = h * p(sp + "wv");
    v.rowwise() += p(sp + "bv").row(0);
    Mat& ck = st.self_k[static_cast<std::size_t>(l)];
    Mat& cv = st.self_v[static_cast<std::size_t>(l)];
    ck.conservativeResize(ck.rows() + 1, Eigen::NoChange);
    ck.row(ck.rows() - 1) = k.row(0);
    cv.conservativeResize(cv.rows() + 1, Eigen::NoChange);
    cv.row(cv.rows() - 1) = v.row(0);
    Mat ctx(1, H);
    for (int hd = 0; hd < heads; ++hd) {
      Mat scores =
          q.middleCols(hd * dk, dk) * ck.middleCols(hd * dk, dk).transpose() *
          scale;
      softmax_rows_inplace(scores);
      ctx.middleCols(hd * dk, dk) = scores * cv.middleCols(hd * dk, dk);
    }
    Mat att = ctx * p(sp + "wo");
    att.rowwise() += p(sp + "bo").row(0);
    x += att;

    const std::string cp = pre + "cross_";
    Mat h2 = ln_rows(x, p(pre + "ln2_g"), p(pre + "ln2_b"));
    Mat cq = h2 * p(cp + "wq");
    cq.rowwise() += p(cp + "bq").row(0);
    const Mat& xk = st.cross_k[static_cast<std::size_t>(l)];
    const Mat& xv = st.cross_v[static_cast<std::size_t>(l)];
    Mat cctx(1, H);
    for (int hd = 0; hd < heads; ++hd) {
      Mat scores = cq.middleCols(hd * dk, dk) *
                   xk.middleCols(hd * dk, dk).transpose() * scale;
      softmax_rows_inplace(scores);
      cctx.middleCols(hd * dk, dk) = scores * xv.middleCols(hd * dk, dk);
    }
    Mat cross = cctx * p(cp + "wo");
    cross.rowwise() += p(cp + "bo").row(0);
    x += cross;

    Mat h3 = ln_rows(x, p(pre + "ln3_g"), p(pre + "ln3_b"));
    Mat f = gelu_mat((h3 * p(pre + "ffn_w1")).rowwise() +
                     p(pre + "ffn_b1").row(0)) *
            p(pre + "ffn_w2");
    f.rowwise() += p(pre + "ffn_b2").row(0);
    x += f;
  }
  Mat hf = ln_rows(x, p("dec_lnf_g"), p("dec_lnf_b"));
  Eigen::RowVectorXd logits =
      (hf * p("out_w")).row(0) + p("out_b").row(0);
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  st.steps += 1;
  return logits.array() - lse;
}

Mat Model::decoder_log_probs(const Mat& memory,
                             const std::vector<int>& tokens) const {
  if (tokens.empty()) {
    throw std::invalid_argument("decoder_log_probs needs at least one token");
  }
  DecodeState st = begin_decode(memory);
  Mat out(static_cast<Eigen::Index>(tokens.size()), cfg_.vocab);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = step_log_probs(st, tokens[i]);
  }
  return out;
}

void Model::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for write: " + path.string());
  }
  out.write(kMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(cfg_.feature_dim));
  put_u32(out, static_cast<std::uint32_t>(cfg_.hidden));
  put_u32(out, static_cast<std::uint32_t>(cfg_.heads));
  put_u32(out, static_cast<std::uint32_t>(cfg_.enc_layers));
  put_u32(out, static_cast<std::uint32_t>(cfg_.dec_layers));
  put_u32(out, static_cast<std::uint32_t>(cfg_.ffn));
  put_u32(out, static_cast<std::uint32_t>(cfg_.vocab));
  put_u32(out, static_cast<std::uint32_t>(cfg_.subsample));
  put_u32(out, static_cast<std::uint32_t>(cfg_.max_target_len));
  out.write(reinterpret_cast<const char*>(&cfg_.dropout), sizeof(double));
  put_u32(out, static_cast<std::uint32_t>(params_.size()));
  for (const Parameter& prm : params_) {
    put_u32(out, static_cast<std::uint32_t>(prm.name.size()));
    out.write(prm.name.data(),
              static_cast<std::streamsize>(prm.name.size()));
    put_u32(out, static_cast<std::uint32_t>(prm.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(prm.value.cols()));
    out.write(reinterpret_cast<const char*>(prm.value.data()),
              static_cast<std::streamsize>(sizeof(double) *
                                           static_cast<std::size_t>(
                                               prm.value.size())));
  }
  if (!out) {
    throw std::runtime_error("short write to " + path.string());
  }
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open model file: " + path.string());
  }
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a model file: " + path.string());
  }
  ModelConfig cfg;
  cfg.feature_dim = static_cast<int>(get_u32(in));
  cfg.hidden = static_cast<int>(get_u32(in));
  cfg.heads = static_cast<int>(get_u32(in));
  cfg.enc_layers = static_cast<int>(get_u32(in));
  cfg.dec_layers = static_cast<int>(get_u32(in));
  cfg.ffn = static_cast<int>(get_u32(in));
  cfg.vocab = static_cast<int>(get_u32(in));
  cfg.subsample = static_cast<int>(get_u32(in));
  cfg.max_target_len = static_cast<int>(get_u32(in));
  in.read(reinterpret_cast<char*>(&cfg.dropout), sizeof(double));
  if (!in) {
    throw std::runtime_error("truncated model file: " + path.string());
  }
  Model model(cfg, 0);
  const std::uint32_t count = get_u32(in);
  if (count != model.params_.size()) {
    throw std::runtime_error("model file parameter count mismatch");
  }
  for (Parameter& prm : model.params_) {
    const std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    if (!in || name != prm.name ||
        rows != static_cast<std::uint32_t>(prm.value.rows()) ||
        cols != static_cast<std::uint32_t>(prm.value.cols())) {
      throw std::runtime_error("model file layout mismatch at " + prm.name);
    }
    in.read(reinterpret_cast<char*>(prm.value.data()),
            static_cast<std::streamsize>(sizeof(double) *
                                         static_cast<std::size_t>(
                                             prm.value.size())));
    if (!in) {
      throw std::runtime_error("truncated model payload: " + path.string());
    }
  }
  return model;
}

}  // namespace iasr
