#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "msb/nn.hpp"
#include "msb/vispipe.hpp"

namespace msb::models {

using nn::FeatureMap;
using nn::Mat;
using nn::Vec;

enum class HeadKind { kClassification, kRegression };

// ---------------------------------------------------------------------------
// Fusion

enum class FusionMethod {
  kConcat,            // (u, v)
  kAbsDiff,           // |u - v|
  kProduct,           // u * v
  kAbsDiffProduct,    // (|u - v|, u * v)
  kConcatProduct,     // (u, v, u * v)
  kConcatAbsDiff,     // (u, v, |u - v|)
  kConcatAbsDiffProduct,  // (u, v, |u - v|, u * v)
};

FusionMethod parse_fusion_method(const std::string& name);
const char* fusion_method_name(FusionMethod m);
int fusion_multiplicity(FusionMethod m);  // 2, 1, 1, 2, 3, 3, 4

struct FusionSpec {
  FusionMethod method = FusionMethod::kConcatAbsDiffProduct;
  int unit_dim = 256;
  int joint_hidden = 128;

  int fused_dim() const { return unit_dim * fusion_multiplicity(method); }
};

// Columns of u and v are per-document vectors of equal width.
Mat fuse(const Mat& u, const Mat& v, FusionMethod method);
// Gradients of the fused vector w.r.t. u and v given the cached inputs.
void fuse_backward(const Mat& dfused, const Mat& u, const Mat& v, FusionMethod method, Mat& du,
                   Mat& dv);

// ---------------------------------------------------------------------------
// Batches and outputs

struct Batch {
  std::vector<std::string> doc_ids;
  std::vector<Mat> text;            // chunk sequences, (dim x n_chunks) each
  std::vector<FeatureMap> grids;    // 3 x 512 x 512 each, when visual input is used
  Mat ar_onehot;                    // 2 x N when accept labels present, else empty
  Mat cit;                          // 1 x N of citation scores when present, else empty

  std::size_t size() const { return doc_ids.size(); }
};

struct ModelOutput {
  Mat ar_probs;    // 2 x N (classification tasks)
  Mat ar_logits;
  Mat cit_pred;    // 1 x N (regression tasks)
  Mat text_repr;   // 256 x N textual representation, when the model has one
};

// Pixels scaled to [0, 1], channel-major.
FeatureMap grid_to_features(const vispipe::PageGrid& grid);

// ---------------------------------------------------------------------------
// Visual backbone: a compact Inception-flavoured conv stack with ten
// independently freezable blocks. Block 1 is nearest the input, block 10
// feeds the 2048-wide global-average-pooled feature.

class VisualBackbone {
 public:
  static constexpr int kNumBlocks = 10;
  static constexpr int kFeatureDim = 2048;
  static constexpr int kInputSide = 512;

  // Backbone weights stand in for a pretrained model: drawn once from a
  // fixed seed, frozen until set_trainable_blocks unfreezes them.
  explicit VisualBackbone(std::uint64_t pretrained_seed = 0x5EEDBEEF);

  Vec forward_one(const FeatureMap& grid);
  // Re-runs forward_one(grid) internally to rebuild caches, then walks the
  // gradient down to the lowest trainable block.
  void backward_one(const FeatureMap& grid, const Vec& dfeature);

  void set_trainable_blocks(const std::set<int>& blocks);
  std::set<int> trainable_blocks() const { return trainable_; }
  std::vector<nn::Param*> params();
  std::vector<nn::Param*> block_params(int block);

 private:
  struct Block {
    std::unique_ptr<nn::Conv2d> conv;
    nn::ReLU relu;
    bool has_relu = true;
  };
  std::vector<Block> blocks_;
  std::set<int> trainable_;
  int final_h_ = 0, final_w_ = 0;
};

// ---------------------------------------------------------------------------
// Models

class Model {
 public:
  virtual ~Model() = default;
  virtual std::vector<nn::Param*> params() = 0;
  virtual ModelOutput forward(const Batch& batch, bool training) = 0;
  // d_ar is the gradient w.r.t. the classification logits, d_cit w.r.t. the
  // regression output; either may be empty for single-task models.
  virtual void backward(const Batch& batch, const Mat& d_ar, const Mat& d_cit) = 0;
  virtual void set_trainable_blocks(const std::set<int>&) {}
  virtual std::vector<nn::Param*> backbone_params() { return {}; }
  virtual const char* kind() const = 0;
  virtual bool uses_visual() const { return false; }

  long trainable_count() { return nn::trainable_parameter_count(params()); }
};

struct SChuBertConfig {
  int input_dim = 768;
  int gru_hidden = 256;
  float dropout = 0.3f;
  HeadKind head = HeadKind::kClassification;
  int num_classes = 2;
};

// Chunk-sequence model: GRU over chunk embeddings, dropout, task head.
class SChuBertModel : public Model {
 public:
  SChuBertModel(const SChuBertConfig& cfg, nn::Rng& rng);

  std::vector<nn::Param*> params() override;
  ModelOutput forward(const Batch& batch, bool training) override;
  void backward(const Batch& batch, const Mat& d_ar, const Mat& d_cit) override;
  const char* kind() const override { return "schubert"; }

  // Padded-batch entry: sequences padded at the tail to a common width;
  // only the first lengths[i] columns of each sequence are consumed.
  ModelOutput forward_padded(const std::vector<Mat>& padded, const std::vector<int>& lengths,
                             bool training);

  const SChuBertConfig& config() const { return cfg_; }

 private:
  SChuBertConfig cfg_;
  nn::Gru gru_;
  nn::Dropout drop_;
  nn::Dense out_;
  nn::Rng drop_rng_{0};
  std::vector<Mat> last_seqs_;
};

struct VisualConfig {
  float dropout = 0.5f;
  HeadKind head = HeadKind::kClassification;
  int num_classes = 2;
  std::uint64_t pretrained_seed = 0x5EEDBEEF;
};

class VisualModel : public Model {
 public:
  VisualModel(const VisualConfig& cfg, nn::Rng& rng);

  std::vector<nn::Param*> params() override;
  ModelOutput forward(const Batch& batch, bool training) override;
  void backward(const Batch& batch, const Mat& d_ar, const Mat& d_cit) override;
  void set_trainable_blocks(const std::set<int>& blocks) override;
  std::vector<nn::Param*> backbone_params() override { return backbone_.params(); }
  const char* kind() const override { return "visual"; }
  bool uses_visual() const override { return true; }

  VisualBackbone& backbone() { return backbone_; }

 private:
  VisualConfig cfg_;
  VisualBackbone backbone_;
  nn::Dropout drop_;
  nn::Dense out_;
  nn::Rng drop_rng_{0};
  Mat last_features_;  // 2048 x N before dropout
};

struct MultiSChuBertConfig {
  SChuBertConfig text;
  VisualConfig visual;
  FusionSpec fusion;
};

// Joint text+visual model: fused textual representation and projected
// visual feature, joint dense layer, task head.
class MultiSChuBertModel : public Model {
 public:
  MultiSChuBertModel(const MultiSChuBertConfig& cfg, nn::Rng& rng);

  std::vector<nn::Param*> params() override;
  ModelOutput forward(const Batch& batch, bool training) override;
  void backward(const Batch& batch, const Mat& d_ar, const Mat& d_cit) override;
  void set_trainable_blocks(const std::set<int>& blocks) override;
  std::vector<nn::Param*> backbone_params() override { return backbone_.params(); }
  const char* kind() const override { return "multischubert"; }
  bool uses_visual() const override { return true; }

  const MultiSChuBertConfig& config() const { return cfg_; }

 private:
  MultiSChuBertConfig cfg_;
  nn::Gru gru_;
  nn::Dropout text_drop_;
  VisualBackbone backbone_;
  nn::Dropout vis_drop_;
  nn::Dense proj_;  // 2048 -> unit_dim, rectified
  nn::ReLU proj_relu_;
  nn::Dense joint_;  // fused -> joint_hidden, rectified
  nn::ReLU joint_relu_;
  nn::Dense out_;
  nn::Rng drop_rng_{0};

  // caches
  Mat last_u_, last_v_;
  Mat last_features_;
};

// 2048 -> 256 rectified projection used between the visual feature and the
// fusion layer; exposed standalone for its shape/range contracts.
Mat project_visual(nn::Dense& proj, nn::ReLU& relu, const Mat& features);

struct MtlConfig {
  int input_dim = 768;
  int gru_hidden = 256;
  float dropout = 0.3f;
  int task_hidden = 256;
};

// Shared GRU trunk with one rectified task-specific dense layer per task.
class MtlModel : public Model {
 public:
  MtlModel(const MtlConfig& cfg, nn::Rng& rng);

  std::vector<nn::Param*> params() override;
  ModelOutput forward(const Batch& batch, bool training) override;
  void backward(const Batch& batch, const Mat& d_ar, const Mat& d_cit) override;
  const char* kind() const override { return "schubert_mtl"; }

 private:
  MtlConfig cfg_;
  nn::Gru gru_;
  nn::Dropout drop_;
  nn::Dense ar_dense_;
  nn::ReLU ar_relu_;
  nn::Dense ar_out_;
  nn::Dense cit_dense_;
  nn::ReLU cit_relu_;
  nn::Dense cit_out_;
  nn::Rng drop_rng_{0};
};

}  // namespace msb::models
