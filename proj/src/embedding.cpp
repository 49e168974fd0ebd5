#include "policysim/embedding.hpp"

#include <algorithm>
#include <cctype>

#include "policysim/error.hpp"
#include "policysim/matrix.hpp"
#include "policysim/rng.hpp"

namespace policysim {

HashedEmbedder::HashedEmbedder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), basis_(mix_seed({seed, 0x656d62ULL})) {
  if (dimension_ == 0) throw Error(ErrorCode::kConfig, "embedding dimension must be positive");
}

Embedding HashedEmbedder::embed_text(const std::string& text) const {
  std::string padded = " ";
  for (unsigned char c : text) padded += static_cast<char>(std::tolower(c));
  padded += ' ';
  Embedding v(dimension_, 0.0);
  bool any = false;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    const auto h = fnv1a(std::string_view(padded).substr(i, 3), basis_);
    v[h % dimension_] += 1.0;
    any = true;
  }
  if (!any) {
    v[0] = 1.0;
    return v;
  }
  normalize(v);
  return v;
}

std::vector<Embedding> HashedEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t));
  return out;
}

RemoteEmbedder::RemoteEmbedder(HttpEndpoint endpoint, std::size_t dimension, std::string model)
    : endpoint_(std::move(endpoint)), dimension_(dimension), model_(std::move(model)) {}

std::vector<Embedding> RemoteEmbedder::embed(const std::vector<std::string>& texts) {
  const auto response = post_json(endpoint_, {{"model", model_}, {"input", texts}});
  std::vector<Embedding> out;
  try {
    for (const auto& item : response.at("data")) {
      Embedding v = item.at("embedding").get<Embedding>();
      if (v.size() != dimension_) {
        throw Error(ErrorCode::kShape, "embedding endpoint returned dimension " + std::to_string(v.size()) +
                                           ", expected " + std::to_string(dimension_));
      }
      normalize(v);
      out.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed embedding response: ") + e.what());
  }
  if (out.size() != texts.size()) throw Error(ErrorCode::kShape, "embedding endpoint returned wrong count");
  return out;
}

}  // namespace policysim
