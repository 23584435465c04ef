#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cforge/activations.hpp"
#include "cforge/http.hpp"
#include "cforge/service.hpp"

namespace cforge::testkit {

std::filesystem::path fixture_dir();

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

 private:
  std::filesystem::path path_;
};

struct Labeled {
  Eigen::MatrixXd x;
  acts::Labels y;
  Eigen::VectorXd direction;  // planted unit direction, when any
};

/// Two Gaussian classes, unit variance, means at +-margin along a random unit
/// direction. Rows alternate +1, -1.
Labeled planted_gaussian(std::size_t n, std::size_t d, double margin, std::uint64_t seed);

/// Inner circle radius `factor`, outer radius 1, Gaussian noise; inner is +1.
Labeled concentric_circles(std::size_t n, double factor, double noise, std::uint64_t seed);

/// Rows of `x` as an ActivationMatrix with ids "<prefix><i>".
acts::ActivationMatrix as_activations(const Eigen::MatrixXd& x, int layer, const std::string& prefix,
                                      const std::string& concept_qid = "Q1");

/// Positive stack: N(mu * u_layer, I); negative stack: N(0, I). Same u for
/// every layer unless `per_layer_direction`.
struct PlantedConcept {
  acts::LayerStack pos;
  acts::LayerStack neg;
  std::vector<Eigen::VectorXd> directions;
};
PlantedConcept planted_concept(std::size_t n_pos, std::size_t n_neg, std::size_t d, double mu, int layers,
                               std::uint64_t seed);

/// Writes every layer of `stack` under the standard activation layout.
void write_stack(const acts::LayerStack& stack, const std::filesystem::path& acts_root, const std::string& model,
                 const std::string& qid, const std::string& split);

/// Recorded Wikimedia/ConceptNet responses keyed by the URLs the clients build.
/// Writes routes.json into `dir` and returns a transport over it.
std::shared_ptr<net::FixtureTransport> wikimedia_fixtures(const std::filesystem::path& dir);

/// Backend over a small in-memory hierarchy: house -> {cottage, tree house};
/// "house" search yields the dwelling plus two other senses.
class FakeBackend : public service::Backend {
 public:
  explicit FakeBackend(std::filesystem::path data_dir);

  std::vector<kg::DisambiguationCandidate> search(const std::string& query) override;
  kg::ConceptNode resolve(const kg::ConceptId& id) override;
  std::vector<kg::ConceptNode> children(const kg::ConceptId& id) override;
  std::vector<kg::ConceptNode> parents(const kg::ConceptId& id) override;
  service::Preview preview(const kg::ConceptNode& node, corpus::Modality modality, std::size_t limit) override;
  std::filesystem::path build_dataset(const service::DatasetRequest& request) override;

  int build_calls = 0;
  bool fail_build = false;

 private:
  std::filesystem::path data_dir_;
};

}  // namespace cforge::testkit
