#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cemt/errors.hpp"
#include "cemt/tensor.hpp"

namespace cemt {

enum class ActiveHead { Seg, Reg, Both };

const char* to_string(ActiveHead head);

// Encoder-decoder shape parameters. The backbone is a scaled-down V-Net-style
// network: `depth` resolution levels with one 3^d conv block per level,
// stride-2 convs between levels, transposed convs plus skip concatenation on
// the way up.
struct NetworkConfig {
  int dims = 2;
  int in_channels = 1;
  int base_channels = 8;
  int depth = 3;
  int num_classes = 2;
  bool instance_norm = false;

  void validate() const;  // throws ConfigError
  int level_factor() const { return 1 << (depth - 1); }
  std::uint64_t fingerprint() const;
  bool operator==(const NetworkConfig&) const = default;
};

struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool operator==(const ParamSegment&) const = default;
};

// Flat parameter layout shared by every model in a run: the backbone segment
// first, then the segmentation head, then the regression head. The config
// fingerprint makes layouts from different configs compare unequal even if
// sizes coincide.
struct ParamLayout {
  std::size_t total = 0;
  std::vector<ParamSegment> segments;
  std::uint64_t config_hash = 0;

  bool operator==(const ParamLayout&) const = default;
  const ParamSegment& segment(const std::string& name) const;
};

// Ordered flat view of all trainable scalars; the unit of EMA arithmetic.
struct ParamVector {
  std::vector<double> values;
  ParamLayout layout;
};

void require_same_layout(const ParamLayout& a, const ParamLayout& b, const char* where);

namespace detail {

// One convolution's geometry plus its slice of the flat parameter vector.
struct ConvSpec {
  enum class Kind { Same3, Down2, Up2, Point1 };
  Kind kind = Kind::Same3;
  int in_ch = 0, out_ch = 0;
  int kz = 1;  // kernel depth: 1 in 2D, matches xy kernel in 3D
  std::size_t w_off = 0, b_off = 0;
  std::size_t weight_count() const;
};

struct NormSpec {
  int ch = 0;
  std::size_t gamma_off = 0, beta_off = 0;
};

}  // namespace detail

// Encoder-decoder with a softmax segmentation head and a tanh signed-distance
// regression head. Both heads always exist structurally so that all models in
// a run share one parameter layout; active_head controls which ones are
// computed and receive gradients.
//
// Single-writer: training mutates an instance from one thread. Forward passes
// on a const-shared instance are NOT safe (activations are cached members);
// clone per thread instead.
class DualHeadNetwork {
 public:
  DualHeadNetwork(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }

  ActiveHead active_head() const { return active_head_; }
  void set_active_head(ActiveHead head) { active_head_ = head; }

  // Teacher passivity: with trainable=false, backward() throws.
  void set_trainable(bool trainable) { trainable_ = trainable; }
  bool trainable() const { return trainable_; }

  // Runs the backbone plus the active head(s). Outputs stay valid until the
  // next forward call. Throws ShapeError for incompatible patches.
  void forward(const Tensor& patch);

  const Tensor& seg_prob() const;  // [num_classes, spatial]
  const Tensor& sdf_out() const;   // [1, spatial]

  // Accumulates parameter gradients from dL/d(seg_prob) and dL/d(sdf_out).
  // Pass nullptr for a head that does not participate in the loss. The head
  // gradient tensors must match the corresponding output shapes.
  void backward(const Tensor* dseg_prob, const Tensor* dsdf_out);

  void zero_grad();
  std::span<const double> grad() const { return grads_; }

  // Plain SGD over all parameters; momentum 0 disables the velocity buffer.
  void sgd_step(double lr, double momentum = 0.0);

  ParamVector params() const;
  void set_params(const ParamVector& p);  // throws LayoutMismatch

  std::span<const double> raw_params() const { return params_; }
  std::span<double> raw_params_mut() { return params_; }

 private:
  struct Level {
    detail::ConvSpec down;   // absent at level 0
    detail::ConvSpec conv;   // 3^d conv at this resolution
    detail::NormSpec norm;   // used when instance_norm is on
    // activations
    Tensor down_act, conv_pre, conv_act;
    // gradients (same shapes)
    Tensor g_down_act, g_conv_pre, g_conv_act;
    // instance-norm cache
    std::vector<double> inv_std;
    Tensor norm_xhat;
  };
  struct DecoderLevel {
    detail::ConvSpec up, conv;
    detail::NormSpec norm;
    Tensor up_act, cat, conv_pre, conv_act;
    Tensor g_up_act, g_cat, g_conv_pre, g_conv_act;
    std::vector<double> inv_std;
    Tensor norm_xhat;
  };

  void build_layout();
  void init_params(std::uint64_t seed);
  void check_patch(const Tensor& patch) const;
  void conv_block_forward(const detail::ConvSpec& conv, const detail::NormSpec& norm,
                          const Tensor& in, Tensor& pre, std::vector<double>& inv_std,
                          Tensor& xhat, Tensor& act);
  void conv_block_backward(const detail::ConvSpec& conv, const detail::NormSpec& norm,
                           const Tensor& in, const Tensor& pre, const std::vector<double>& inv_std,
                           const Tensor& xhat, const Tensor& act, Tensor& g_act, Tensor& g_pre,
                           Tensor& g_in);

  NetworkConfig config_;
  ParamLayout layout_;
  ActiveHead active_head_ = ActiveHead::Both;
  bool trainable_ = true;

  std::vector<double> params_, grads_, velocity_;

  std::vector<Level> levels_;
  std::vector<DecoderLevel> decoder_;
  detail::ConvSpec seg_conv_, reg_conv_;

  Tensor input_;
  Tensor seg_logits_, seg_prob_, g_seg_logits_;
  Tensor reg_pre_, sdf_out_, g_reg_pre_;
  Tensor g_input_;
  bool has_seg_out_ = false, has_sdf_out_ = false;
};

// Convenience factory matching the rest of the module surface.
DualHeadNetwork build_network(const NetworkConfig& config, std::uint64_t seed);

// Checkpoint: JSON header (config echo + layout) followed by the raw
// little-endian parameter array. Round-trip exact.
void save_checkpoint(const std::string& path, const NetworkConfig& config, const ParamVector& params);
struct Checkpoint {
  NetworkConfig config;
  ParamVector params;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cemt
