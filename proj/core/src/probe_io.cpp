#include "cforge/error.hpp"
#include "cforge/io.hpp"
#include "cforge/probes.hpp"

namespace cforge::probes {

namespace fs = std::filesystem;

namespace {

fs::path with_ext(const fs::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

acts::FloatMatrix to_float(const MatrixXd& m) { return m.cast<float>(); }

}  // namespace

void save_cav(const Cav& cav, const fs::path& stem) {
  nlohmann::json header{{"kind", "cav"},
                        {"concept", cav.concept_qid},
                        {"model_id", cav.model_id},
                        {"layer_index", cav.layer_index},
                        {"bias", cav.b},
                        {"dim", cav.w.size()},
                        {"hyperparams", to_json(cav.hp)},
                        {"metrics",
                         {{"train_accuracy", cav.train_accuracy},
                          {"test_accuracy", cav.test_accuracy},
                          {"epochs", cav.trace.epochs},
                          {"rejected_epochs", cav.trace.rejected_epochs},
                          {"converged", cav.trace.converged},
                          {"eta0", cav.trace.eta0}}}};
  io::write_atomic(with_ext(stem, ".actv"), acts::encode_actv(to_float(cav.w.transpose())));
  io::write_json(with_ext(stem, ".json"), header);
}

Cav load_cav(const fs::path& stem) {
  const auto header = io::read_json(with_ext(stem, ".json"));
  const auto payload = acts::decode_actv(io::read_file(with_ext(stem, ".actv")));
  try {
    if (header.at("kind") != "cav") throw Error(Errc::parse, stem.string() + " is not a CAV");
    if (payload.rows() != 1 || payload.cols() != header.at("dim").get<Eigen::Index>()) {
      throw Error(Errc::parse, stem.string() + ": CAV payload shape disagrees with header");
    }
    Cav cav;
    cav.w = payload.row(0).transpose().cast<double>();
    cav.b = header.at("bias").get<double>();
    cav.concept_qid = header.value("concept", std::string{});
    cav.model_id = header.value("model_id", std::string{});
    cav.layer_index = header.at("layer_index").get<int>();
    cav.hp = hyperparams_from_json(header.at("hyperparams"));
    const auto& m = header.at("metrics");
    cav.train_accuracy = m.value("train_accuracy", 0.0);
    cav.test_accuracy = m.value("test_accuracy", 0.0);
    cav.trace.epochs = m.value("epochs", 0);
    cav.trace.rejected_epochs = m.value("rejected_epochs", 0);
    cav.trace.converged = m.value("converged", false);
    cav.trace.eta0 = m.value("eta0", 0.0);
    return cav;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, stem.string() + ": " + e.what());
  }
}

void save_car(const Car& car, const fs::path& stem) {
  nlohmann::json header{{"kind", "car"},
                        {"concept", car.concept_qid},
                        {"model_id", car.model_id},
                        {"layer_index", car.layer_index},
                        {"bias", car.bias},
                        {"gamma", car.gamma},
                        {"C", car.C},
                        {"dual_coefs", std::vector<double>(car.dual_coefs.data(),
                                                           car.dual_coefs.data() + car.dual_coefs.size())},
                        {"metrics",
                         {{"train_accuracy", car.train_accuracy},
                          {"test_accuracy", car.test_accuracy},
                          {"iterations", car.iterations},
                          {"max_violation", car.max_violation}}}};
  io::write_atomic(with_ext(stem, ".actv"), acts::encode_actv(to_float(car.support_vectors)));
  io::write_json(with_ext(stem, ".json"), header);
}

Car load_car(const fs::path& stem) {
  const auto header = io::read_json(with_ext(stem, ".json"));
  const auto payload = acts::decode_actv(io::read_file(with_ext(stem, ".actv")));
  try {
    if (header.at("kind") != "car") throw Error(Errc::parse, stem.string() + " is not a CAR");
    const auto coefs = header.at("dual_coefs").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(coefs.size()) != payload.rows()) {
      throw Error(Errc::parse, stem.string() + ": support vector count disagrees with dual coefficients");
    }
    Car car;
    car.support_vectors = payload.cast<double>();
    car.dual_coefs = Eigen::Map<const VectorXd>(coefs.data(), static_cast<Eigen::Index>(coefs.size()));
    car.bias = header.at("bias").get<double>();
    car.gamma = header.at("gamma").get<double>();
    car.C = header.at("C").get<double>();
    car.concept_qid = header.value("concept", std::string{});
    car.model_id = header.value("model_id", std::string{});
    car.layer_index = header.at("layer_index").get<int>();
    const auto& m = header.at("metrics");
    car.train_accuracy = m.value("train_accuracy", 0.0);
    car.test_accuracy = m.value("test_accuracy", 0.0);
    car.iterations = m.value("iterations", 0L);
    car.max_violation = m.value("max_violation", 0.0);
    return car;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, stem.string() + ": " + e.what());
  }
}

}  // namespace cforge::probes
