#include "msb/models.hpp"

#include <algorithm>

namespace msb::models {

// ---------------------------------------------------------------------------
// Fusion

FusionMethod parse_fusion_method(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (c != ' ') s += c;
  }
  if (s == "(u,v)") return FusionMethod::kConcat;
  if (s == "|u-v|" || s == "(|u-v|)") return FusionMethod::kAbsDiff;
  if (s == "u*v" || s == "(u*v)") return FusionMethod::kProduct;
  if (s == "(|u-v|,u*v)") return FusionMethod::kAbsDiffProduct;
  if (s == "(u,v,u*v)") return FusionMethod::kConcatProduct;
  if (s == "(u,v,|u-v|)") return FusionMethod::kConcatAbsDiff;
  if (s == "(u,v,|u-v|,u*v)") return FusionMethod::kConcatAbsDiffProduct;
  throw DomainError("unknown fusion method: '" + name + "'");
}

const char* fusion_method_name(FusionMethod m) {
  switch (m) {
    case FusionMethod::kConcat: return "(u,v)";
    case FusionMethod::kAbsDiff: return "|u-v|";
    case FusionMethod::kProduct: return "u*v";
    case FusionMethod::kAbsDiffProduct: return "(|u-v|,u*v)";
    case FusionMethod::kConcatProduct: return "(u,v,u*v)";
    case FusionMethod::kConcatAbsDiff: return "(u,v,|u-v|)";
    case FusionMethod::kConcatAbsDiffProduct: return "(u,v,|u-v|,u*v)";
  }
  throw DomainError("unknown fusion method enum");
}

int fusion_multiplicity(FusionMethod m) {
  switch (m) {
    case FusionMethod::kConcat: return 2;
    case FusionMethod::kAbsDiff: return 1;
    case FusionMethod::kProduct: return 1;
    case FusionMethod::kAbsDiffProduct: return 2;
    case FusionMethod::kConcatProduct: return 3;
    case FusionMethod::kConcatAbsDiff: return 3;
    case FusionMethod::kConcatAbsDiffProduct: return 4;
  }
  throw DomainError("unknown fusion method enum");
}

Mat fuse(const Mat& u, const Mat& v, FusionMethod method) {
  if (u.rows() != v.rows() || u.cols() != v.cols()) {
    throw ShapeError("fuse: u and v must have identical shapes");
  }
  const Eigen::Index d = u.rows();
  Mat out(d * fusion_multiplicity(method), u.cols());
  switch (method) {
    case FusionMethod::kConcat:
      out << u, v;
      break;
    case FusionMethod::kAbsDiff:
      out = (u - v).cwiseAbs();
      break;
    case FusionMethod::kProduct:
      out = u.cwiseProduct(v);
      break;
    case FusionMethod::kAbsDiffProduct:
      out << (u - v).cwiseAbs(), u.cwiseProduct(v);
      break;
    case FusionMethod::kConcatProduct:
      out << u, v, u.cwiseProduct(v);
      break;
    case FusionMethod::kConcatAbsDiff:
      out << u, v, (u - v).cwiseAbs();
      break;
    case FusionMethod::kConcatAbsDiffProduct:
      out << u, v, (u - v).cwiseAbs(), u.cwiseProduct(v);
      break;
  }
  return out;
}

namespace {

// Subgradient of |u - v|: sign(u - v), 0 at ties.
Mat abs_diff_sign(const Mat& u, const Mat& v) {
  Mat diff = u - v;
  Mat s(diff.rows(), diff.cols());
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    float d = diff.data()[i];
    s.data()[i] = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
  }
  return s;
}

}  // namespace

void fuse_backward(const Mat& dfused, const Mat& u, const Mat& v, FusionMethod method, Mat& du,
                   Mat& dv) {
  const Eigen::Index d = u.rows();
  du = Mat::Zero(u.rows(), u.cols());
  dv = Mat::Zero(v.rows(), v.cols());
  Eigen::Index row = 0;
  auto take = [&]() {
    Mat block = dfused.middleRows(row, d);
    row += d;
    return block;
  };
  auto add_u = [&](const Mat& g) { du += g; };
  auto add_v = [&](const Mat& g) { dv += g; };
  auto absdiff = [&](const Mat& g) {
    Mat s = abs_diff_sign(u, v);
    du += g.cwiseProduct(s);
    dv -= g.cwiseProduct(s);
  };
  auto product = [&](const Mat& g) {
    du += g.cwiseProduct(v);
    dv += g.cwiseProduct(u);
  };
  switch (method) {
    case FusionMethod::kConcat:
      add_u(take());
      add_v(take());
      break;
    case FusionMethod::kAbsDiff:
      absdiff(take());
      break;
    case FusionMethod::kProduct:
      product(take());
      break;
    case FusionMethod::kAbsDiffProduct:
      absdiff(take());
      product(take());
      break;
    case FusionMethod::kConcatProduct:
      add_u(take());
      add_v(take());
      product(take());
      break;
    case FusionMethod::kConcatAbsDiff:
      add_u(take());
      add_v(take());
      absdiff(take());
      break;
    case FusionMethod::kConcatAbsDiffProduct:
      add_u(take());
      add_v(take());
      absdiff(take());
      product(take());
      break;
  }
}

// ---------------------------------------------------------------------------
// Grid conversion

FeatureMap grid_to_features(const vispipe::PageGrid& grid) {
  const cv::Mat& img = grid.pixels;
  if (img.empty() || img.channels() != 3) {
    throw ShapeError("grid_to_features: expected a 3-channel raster");
  }
  FeatureMap fm(3, img.rows, img.cols);
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      const Eigen::Index idx = static_cast<Eigen::Index>(y) * img.cols + x;
      for (int c = 0; c < 3; ++c) {
        fm.data(c, idx) = static_cast<float>(row[x][c]) / 255.0f;
      }
    }
  }
  return fm;
}

// ---------------------------------------------------------------------------
// Visual backbone

VisualBackbone::VisualBackbone(std::uint64_t pretrained_seed) {
  nn::Rng rng(pretrained_seed);
  auto conv = [&](int block, nn::ConvSpec spec) {
    Block b;
    b.conv = std::make_unique<nn::Conv2d>("backbone.b" + std::to_string(block), spec, rng);
    return b;
  };
  // 512 -> stem avg-pool 8 -> 64; spatial then halves at blocks 1,2,4,6,8.
  blocks_.push_back(conv(1, {.in_channels = 3, .out_channels = 16, .kernel = 3, .stride = 2, .pad = 1}));
  blocks_.push_back(conv(2, {.in_channels = 16, .out_channels = 32, .kernel = 3, .stride = 2, .pad = 1}));
  blocks_.push_back(conv(3, {.in_channels = 32, .out_channels = 32, .kernel = 3, .stride = 1, .pad = 1}));
  blocks_.push_back(conv(4, {.in_channels = 32, .out_channels = 64, .kernel = 3, .stride = 2, .pad = 1}));
  blocks_.push_back(conv(5, {.in_channels = 64, .out_channels = 64, .kernel = 3, .stride = 1, .pad = 1}));
  blocks_.push_back(conv(6, {.in_channels = 64, .out_channels = 128, .kernel = 3, .stride = 2, .pad = 1}));
  blocks_.push_back(conv(7, {.in_channels = 128, .out_channels = 128, .kernel = 3, .stride = 1, .pad = 1}));
  blocks_.push_back(conv(8, {.in_channels = 128, .out_channels = 256, .kernel = 3, .stride = 2, .pad = 1}));
  blocks_.push_back(conv(9, {.in_channels = 256, .out_channels = 256, .kernel = 3, .stride = 1, .pad = 1}));
  blocks_.push_back(conv(10, {.in_channels = 256, .out_channels = kFeatureDim, .kernel = 1, .stride = 1, .pad = 0}));
  set_trainable_blocks({});
}

Vec VisualBackbone::forward_one(const FeatureMap& grid) {
  if (grid.channels != 3 || grid.height != kInputSide || grid.width != kInputSide) {
    throw ShapeError("backbone: expected 3x512x512 grid input");
  }
  FeatureMap x = nn::avg_pool(grid, 8);
  for (auto& b : blocks_) {
    x = b.conv->forward(x);
    x.data = b.relu.forward(x.data);
  }
  final_h_ = x.height;
  final_w_ = x.width;
  return nn::global_avg_pool(x);
}

void VisualBackbone::backward_one(const FeatureMap& grid, const Vec& dfeature) {
  if (trainable_.empty()) return;
  const int lowest = *trainable_.begin();
  forward_one(grid);  // rebuild layer caches for this sample
  FeatureMap dy = nn::global_avg_pool_backward(dfeature, kFeatureDim, final_h_, final_w_);
  for (int block = kNumBlocks; block >= lowest; --block) {
    Block& b = blocks_[static_cast<std::size_t>(block - 1)];
    dy.data = b.relu.backward(dy.data);
    dy = b.conv->backward(dy);
  }
}

void VisualBackbone::set_trainable_blocks(const std::set<int>& blocks) {
  for (int id : blocks) {
    if (id < 1 || id > kNumBlocks) {
      throw DomainError("unknown backbone block id: " + std::to_string(id));
    }
  }
  trainable_ = blocks;
  for (int id = 1; id <= kNumBlocks; ++id) {
    const bool on = trainable_.count(id) > 0;
    for (nn::Param* p : block_params(id)) p->trainable = on;
  }
}

std::vector<nn::Param*> VisualBackbone::params() {
  std::vector<nn::Param*> all;
  for (auto& b : blocks_) {
    for (nn::Param* p : b.conv->params()) all.push_back(p);
  }
  return all;
}

std::vector<nn::Param*> VisualBackbone::block_params(int block) {
  if (block < 1 || block > kNumBlocks) {
    throw DomainError("unknown backbone block id: " + std::to_string(block));
  }
  return blocks_[static_cast<std::size_t>(block - 1)].conv->params();
}

// ---------------------------------------------------------------------------
// Head helpers

namespace {

void apply_head(HeadKind head, nn::Dense& out, const Mat& h, ModelOutput& o) {
  Mat logits = out.forward(h);
  if (head == HeadKind::kClassification) {
    o.ar_logits = logits;
    o.ar_probs = nn::softmax_columns(logits);
  } else {
    o.cit_pred = logits;
  }
}

const Mat& head_grad(HeadKind head, const Mat& d_ar, const Mat& d_cit) {
  const Mat& d = head == HeadKind::kClassification ? d_ar : d_cit;
  if (d.size() == 0) throw LabelError("missing gradient for the model's active task");
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// SChuBERT

SChuBertModel::SChuBertModel(const SChuBertConfig& cfg, nn::Rng& rng)
    : cfg_(cfg),
      gru_("schubert.gru", cfg.input_dim, cfg.gru_hidden, rng),
      drop_(cfg.dropout),
      out_("schubert.out", cfg.gru_hidden,
           cfg.head == HeadKind::kClassification ? cfg.num_classes : 1, rng),
      drop_rng_(rng()) {}

std::vector<nn::Param*> SChuBertModel::params() {
  std::vector<nn::Param*> all = gru_.params();
  for (nn::Param* p : out_.params()) all.push_back(p);
  return all;
}

ModelOutput SChuBertModel::forward(const Batch& batch, bool training) {
  if (batch.text.empty()) throw ShapeError("schubert: empty batch");
  Mat h(cfg_.gru_hidden, static_cast<Eigen::Index>(batch.text.size()));
  for (std::size_t i = 0; i < batch.text.size(); ++i) {
    h.col(static_cast<Eigen::Index>(i)) = gru_.forward(batch.text[i]);
  }
  last_seqs_ = batch.text;
  ModelOutput o;
  o.text_repr = drop_.forward(h, training, drop_rng_);
  apply_head(cfg_.head, out_, o.text_repr, o);
  return o;
}

ModelOutput SChuBertModel::forward_padded(const std::vector<Mat>& padded,
                                          const std::vector<int>& lengths, bool training) {
  if (padded.size() != lengths.size()) throw ShapeError("schubert: lengths misaligned with batch");
  Batch b;
  for (std::size_t i = 0; i < padded.size(); ++i) {
    if (lengths[i] < 1 || lengths[i] > padded[i].cols()) {
      throw ShapeError("schubert: length " + std::to_string(lengths[i]) +
                       " exceeds padded width " + std::to_string(padded[i].cols()));
    }
    b.doc_ids.push_back("");
    b.text.push_back(padded[i].leftCols(lengths[i]));
  }
  return forward(b, training);
}

void SChuBertModel::backward(const Batch& batch, const Mat& d_ar, const Mat& d_cit) {
  Mat dh = out_.backward(head_grad(cfg_.head, d_ar, d_cit));
  dh = drop_.backward(dh);
  for (std::size_t i = 0; i < batch.text.size(); ++i) {
    gru_.forward(batch.text[i]);  // rebuild per-sequence caches
    gru_.backward(dh.col(static_cast<Eigen::Index>(i)));
  }
}

// ---------------------------------------------------------------------------
// Visual model

VisualModel::VisualModel(const VisualConfig& cfg, nn::Rng& rng)
    : cfg_(cfg),
      backbone_(cfg.pretrained_seed),
      drop_(cfg.dropout),
      out_("visual.out", VisualBackbone::kFeatureDim,
           cfg.head == HeadKind::kClassification ? cfg.num_classes : 1, rng),
      drop_rng_(rng()) {}

std::vector<nn::Param*> VisualModel::params() {
  std::vector<nn::Param*> all = backbone_.params();
  for (nn::Param* p : out_.params()) all.push_back(p);
  return all;
}

ModelOutput VisualModel::forward(const Batch& batch, bool training) {
  if (batch.grids.empty()) throw ShapeError("visual: empty grid batch");
  last_features_.resize(VisualBackbone::kFeatureDim, static_cast<Eigen::Index>(batch.grids.size()));
  for (std::size_t i = 0; i < batch.grids.size(); ++i) {
    last_features_.col(static_cast<Eigen::Index>(i)) = backbone_.forward_one(batch.grids[i]);
  }
  ModelOutput o;
  Mat dropped = drop_.forward(last_features_, training, drop_rng_);
  apply_head(cfg_.head, out_, dropped, o);
  return o;
}

void VisualModel::backward(const Batch& batch, const Mat& d_ar, const Mat& d_cit) {
  Mat dfeat = out_.backward(head_grad(cfg_.head, d_ar, d_cit));
  dfeat = drop_.backward(dfeat);
  if (!backbone_.trainable_blocks().empty()) {
    for (std::size_t i = 0; i < batch.grids.size(); ++i) {
      backbone_.backward_one(batch.grids[i], dfeat.col(static_cast<Eigen::Index>(i)));
    }
  }
}

void VisualModel::set_trainable_blocks(const std::set<int>& blocks) {
  backbone_.set_trainable_blocks(blocks);
}

// ---------------------------------------------------------------------------
// MultiSChuBERT

Mat project_visual(nn::Dense& proj, nn::ReLU& relu, const Mat& features) {
  if (features.rows() != proj.in_dim()) {
    throw ShapeError("project_visual: expected width " + std::to_string(proj.in_dim()));
  }
  return relu.forward(proj.forward(features));
}

MultiSChuBertModel::MultiSChuBertModel(const MultiSChuBertConfig& cfg, nn::Rng& rng)
    : cfg_(cfg),
      gru_("joint.gru", cfg.text.input_dim, cfg.text.gru_hidden, rng),
      text_drop_(cfg.text.dropout),
      backbone_(cfg.visual.pretrained_seed),
      vis_drop_(cfg.visual.dropout),
      proj_("joint.vis_proj", VisualBackbone::kFeatureDim, cfg.fusion.unit_dim, rng),
      joint_("joint.dense", cfg.fusion.fused_dim(), cfg.fusion.joint_hidden, rng),
      out_("joint.out", cfg.fusion.joint_hidden,
           cfg.text.head == HeadKind::kClassification ? cfg.text.num_classes : 1, rng),
      drop_rng_(rng()) {
  if (cfg.fusion.unit_dim != cfg.text.gru_hidden) {
    throw DomainError("fusion unit_dim must match the textual representation width");
  }
}

std::vector<nn::Param*> MultiSChuBertModel::params() {
  std::vector<nn::Param*> all = gru_.params();
  for (nn::Param* p : backbone_.params()) all.push_back(p);
  for (nn::Param* p : proj_.params()) all.push_back(p);
  for (nn::Param* p : joint_.params()) all.push_back(p);
  for (nn::Param* p : out_.params()) all.push_back(p);
  return all;
}

ModelOutput MultiSChuBertModel::forward(const Batch& batch, bool training) {
  if (batch.text.size() != batch.grids.size() || batch.text.empty()) {
    throw IntegrityError("multischubert: text and grid batches must align by doc");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(batch.text.size());
  Mat h(cfg_.text.gru_hidden, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    h.col(i) = gru_.forward(batch.text[static_cast<std::size_t>(i)]);
  }
  last_features_.resize(VisualBackbone::kFeatureDim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    last_features_.col(i) = backbone_.forward_one(batch.grids[static_cast<std::size_t>(i)]);
  }
  ModelOutput o;
  last_u_ = text_drop_.forward(h, training, drop_rng_);
  o.text_repr = last_u_;
  Mat vis_dropped = vis_drop_.forward(last_features_, training, drop_rng_);
  last_v_ = project_visual(proj_, proj_relu_, vis_dropped);
  Mat fused = fuse(last_u_, last_v_, cfg_.fusion.method);
  Mat joint = joint_relu_.forward(joint_.forward(fused));
  apply_head(cfg_.text.head, out_, joint, o);
  return o;
}

void MultiSChuBertModel::backward(const Batch& batch, const Mat& d_ar, const Mat& d_cit) {
  Mat djoint = out_.backward(head_grad(cfg_.text.head, d_ar, d_cit));
  Mat dfused = joint_.backward(joint_relu_.backward(djoint));
  Mat du, dv;
  fuse_backward(dfused, last_u_, last_v_, cfg_.fusion.method, du, dv);

  // textual path
  Mat dh = text_drop_.backward(du);
  for (std::size_t i = 0; i < batch.text.size(); ++i) {
    gru_.forward(batch.text[i]);
    gru_.backward(dh.col(static_cast<Eigen::Index>(i)));
  }

  // visual path
  Mat dfeat = vis_drop_.backward(proj_.backward(proj_relu_.backward(dv)));
  if (!backbone_.trainable_blocks().empty()) {
    for (std::size_t i = 0; i < batch.grids.size(); ++i) {
      backbone_.backward_one(batch.grids[i], dfeat.col(static_cast<Eigen::Index>(i)));
    }
  }
}

void MultiSChuBertModel::set_trainable_blocks(const std::set<int>& blocks) {
  backbone_.set_trainable_blocks(blocks);
}

// ---------------------------------------------------------------------------
// Multi-task model

MtlModel::MtlModel(const MtlConfig& cfg, nn::Rng& rng)
    : cfg_(cfg),
      gru_("mtl.gru", cfg.input_dim, cfg.gru_hidden, rng),
      drop_(cfg.dropout),
      ar_dense_("mtl.ar_dense", cfg.gru_hidden, cfg.task_hidden, rng),
      ar_out_("mtl.ar_out", cfg.task_hidden, 2, rng),
      cit_dense_("mtl.cit_dense", cfg.gru_hidden, cfg.task_hidden, rng),
      cit_out_("mtl.cit_out", cfg.task_hidden, 1, rng),
      drop_rng_(rng()) {}

std::vector<nn::Param*> MtlModel::params() {
  std::vector<nn::Param*> all = gru_.params();
  for (nn::Dense* d : {&ar_dense_, &ar_out_, &cit_dense_, &cit_out_}) {
    for (nn::Param* p : d->params()) all.push_back(p);
  }
  return all;
}

ModelOutput MtlModel::forward(const Batch& batch, bool training) {
  if (batch.text.empty()) throw ShapeError("mtl: empty batch");
  Mat h(cfg_.gru_hidden, static_cast<Eigen::Index>(batch.text.size()));
  for (std::size_t i = 0; i < batch.text.size(); ++i) {
    h.col(static_cast<Eigen::Index>(i)) = gru_.forward(batch.text[i]);
  }
  ModelOutput o;
  o.text_repr = drop_.forward(h, training, drop_rng_);
  // one shared trunk pass feeds both task branches
  o.ar_logits = ar_out_.forward(ar_relu_.forward(ar_dense_.forward(o.text_repr)));
  o.ar_probs = nn::softmax_columns(o.ar_logits);
  o.cit_pred = cit_out_.forward(cit_relu_.forward(cit_dense_.forward(o.text_repr)));
  return o;
}

void MtlModel::backward(const Batch& batch, const Mat& d_ar, const Mat& d_cit) {
  if (d_ar.size() == 0 || d_cit.size() == 0) {
    throw LabelError("mtl: both task gradients are required");
  }
  Mat drepr = ar_dense_.backward(ar_relu_.backward(ar_out_.backward(d_ar)));
  drepr += cit_dense_.backward(cit_relu_.backward(cit_out_.backward(d_cit)));
  Mat dh = drop_.backward(drepr);
  for (std::size_t i = 0; i < batch.text.size(); ++i) {
    gru_.forward(batch.text[i]);
    gru_.backward(dh.col(static_cast<Eigen::Index>(i)));
  }
}

}  // namespace msb::models
