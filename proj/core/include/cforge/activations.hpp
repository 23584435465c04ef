#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace cforge::acts {

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Labels = Eigen::VectorXi;  // entries are +1 / -1

/// Pooled activations of one (model, layer, dataset) triple, one row per sample.
struct ActivationMatrix {
  FloatMatrix data;
  int layer_index = 0;
  std::string model_id;
  std::string pooling = "mean";
  std::string concept_qid;
  std::vector<std::string> sample_ids;

  Eigen::Index rows() const noexcept { return data.rows(); }
  Eigen::Index cols() const noexcept { return data.cols(); }
  /// Throws on NaN/Inf, negative layer or a sample id count that differs from rows.
  void validate() const;
};

// ACTV layout: "ACTV", version byte 0x01, u32 LE rows, u32 LE cols, row-major
// f32 LE payload.
inline constexpr std::uint8_t kActvVersion = 0x01;
inline constexpr std::size_t kActvHeaderBytes = 13;

std::string encode_actv(const FloatMatrix& m);
FloatMatrix decode_actv(std::string_view bytes);

/// ACTV payload plus `<file>.meta.json` sidecar. Refuses non-finite values.
void write_actv(const ActivationMatrix& matrix, const std::filesystem::path& path);
ActivationMatrix read_actv(const std::filesystem::path& path);

/// sha256 hex of the ids joined by '\n'; stored in the sidecar.
std::string sample_ids_digest(const std::vector<std::string>& ids);

std::filesystem::path sidecar_path(const std::filesystem::path& actv_path);

/// `<acts>/<model_id>/<qid>/<split>/layer_<i>.actv`
std::filesystem::path layer_path(const std::filesystem::path& acts_root, std::string_view model_id,
                                 std::string_view qid, std::string_view split, int layer);

using LayerStack = std::map<int, ActivationMatrix>;

/// Every layer_<i>.actv under one split directory.
LayerStack load_layer_stack(const std::filesystem::path& acts_root, std::string_view model_id, std::string_view qid,
                            std::string_view split);

struct ProbeSet {
  Eigen::MatrixXd x_train;
  Labels y_train;
  Eigen::MatrixXd x_test;
  Labels y_test;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
  int layer_index = 0;
  std::string concept_qid;
  std::string model_id;
  std::size_t per_class = 0;
};

struct ProbeSetOptions {
  std::size_t n_per_class = 200;
  double train_frac = 0.8;
  std::uint64_t seed = 0;
  /// Separate seed for the negative draw; defaults to `seed`. Keeping `seed`
  /// fixed while varying this resamples negatives against fixed positives.
  std::optional<std::uint64_t> negative_seed;
};

/// Balanced draw of min(n_per_class, rows) per class and a per-class
/// train/test split.
ProbeSet make_probe_set(const ActivationMatrix& pos, const ActivationMatrix& neg, const ProbeSetOptions& options = {});

/// Stacks rows of a positive and a negative matrix with +1/-1 labels.
void stack_labeled(const ActivationMatrix& pos, const ActivationMatrix& neg, Eigen::MatrixXd& x, Labels& y);

struct FoldPlan {
  int k = 10;
  std::vector<int> fold_of;  // per sample index
  std::uint64_t seed = 0;

  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
};

/// Stratified folds; sizes differ by at most one.
FoldPlan make_folds(std::size_t n_samples, const Labels& labels, int k = 10, std::uint64_t seed = 0);

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows);
Labels select_rows(const Labels& y, const std::vector<std::size_t>& rows);

}  // namespace cforge::acts
