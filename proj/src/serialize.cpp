#include "arac/serialize.hpp"

#include "arac/error.hpp"
#include "arac/rng.hpp"

namespace arac::serialize {

using nlohmann::json;
using numerics::Mlp;
using numerics::Tensor;

json mlp_to_json(const Mlp& m) {
  json j;
  j["dims"] = m.dims();
  json ws = json::array();
  for (const Tensor& w : m.weights()) ws.push_back(w.raw());
  json bs = json::array();
  for (const Tensor& b : m.biases()) bs.push_back(b.raw());
  j["weights"] = ws;
  j["biases"] = bs;
  return j;
}

Mlp mlp_from_json(const json& j) {
  std::vector<std::size_t> dims = j.at("dims").get<std::vector<std::size_t>>();
  Rng dummy(0);
  Mlp m = Mlp::make(dims, dummy);
  const json& ws = j.at("weights");
  const json& bs = j.at("biases");
  if (ws.size() != m.weights().size() || bs.size() != m.biases().size())
    throw ContractViolation("mlp load: layer count mismatch");
  for (std::size_t l = 0; l < ws.size(); ++l) {
    std::vector<double> wv = ws[l].get<std::vector<double>>();
    std::vector<double> bv = bs[l].get<std::vector<double>>();
    if (wv.size() != m.weights()[l].numel() || bv.size() != m.biases()[l].numel())
      throw ContractViolation("mlp load: parameter size mismatch");
    m.weights()[l] = Tensor(m.weights()[l].shape(), std::move(wv));
    m.biases()[l] = Tensor(m.biases()[l].shape(), std::move(bv));
  }
  return m;
}

}  // namespace arac::serialize
