#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "qcnn/doe.hpp"
#include "qcnn/net.hpp"
#include "qcnn/schema.hpp"

namespace httplib {
class Server;
}

namespace qcnn {

struct ServiceResponse {
  int status = 200;
  std::string body;  // JSON
};

struct ServiceOptions {
  double threshold = 0.5;
  LotMode default_mode = LotMode::limitation;
  std::size_t resolution = kDefaultResolution;
};

// Transport-independent request handlers over an immutable model snapshot.
// reload() swaps the snapshot atomically: a request already holding the old
// snapshot finishes on it, later requests see the new one.
class ModelService {
 public:
  ModelService(FactorSchema schema, Mlp model, ServiceOptions options = {});

  ServiceResponse schema() const;
  ServiceResponse predict(const std::string& body) const;
  ServiceResponse limits(const std::string& body) const;
  ServiceResponse check(const std::string& body) const;
  // Body: {"model": "<path>"}.
  ServiceResponse reload(const std::string& body);

  // Swaps in a model directly. Throws SchemaError when its schema
  // fingerprint does not match the served schema.
  void replace_model(Mlp model);

  // Registers GET /api/schema and POST /api/{predict,limits,check,reload}.
  void mount(httplib::Server& server);

 private:
  struct Snapshot {
    FactorSchema schema;
    Mlp model;
  };

  std::shared_ptr<const Snapshot> snapshot() const;

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Snapshot> current_;
};

}  // namespace qcnn
