#include "policysim/prompt.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "policysim/error.hpp"

#ifndef POLICYSIM_TEMPLATE_DIR
#define POLICYSIM_TEMPLATE_DIR "templates"
#endif

namespace policysim {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  PromptLibrary lib;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw Error(ErrorCode::kIo, "template directory not found: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    lib.add(entry.path().stem().string(), buf.str());
  }
  return lib;
}

void PromptLibrary::add(std::string id, std::string text) { templates_[std::move(id)] = std::move(text); }

std::string PromptLibrary::render(std::string_view id, const PromptFields& fields) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw Error(ErrorCode::kTemplate, "unknown template '" + std::string(id) + "'");
  const std::string& text = it->second;
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '{' || c == '}') && i + 1 < text.size() && text[i + 1] == c) {
      out += c;
      ++i;
      continue;
    }
    if (c == '{' && i + 1 < text.size() && ident_start(text[i + 1])) {
      std::size_t j = i + 1;
      while (j < text.size() && ident_char(text[j])) ++j;
      if (j < text.size() && text[j] == '}') {
        const std::string_view name(text.data() + i + 1, j - i - 1);
        auto f = fields.find(name);
        if (f == fields.end()) {
          throw Error(ErrorCode::kTemplate, "template '" + std::string(id) + "' is missing field '" +
                                                std::string(name) + "'");
        }
        out += f->second;
        i = j;
        continue;
      }
    }
    out += c;
  }
  return out;
}

std::filesystem::path default_template_dir() { return POLICYSIM_TEMPLATE_DIR; }

}  // namespace policysim
