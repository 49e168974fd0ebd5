#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace policysim {

using PromptFields = std::map<std::string, std::string, std::less<>>;

namespace templates {
inline constexpr std::string_view kProfileSynthesis = "profile_synthesis";
inline constexpr std::string_view kShortMemory = "short_memory";
inline constexpr std::string_view kLongMemory = "long_memory";
inline constexpr std::string_view kActionsCalling = "actions_calling";
inline constexpr std::string_view kStance = "stance";
}  // namespace templates

/// Plain-text prompt templates with `{name}` placeholders. `{{` and `}}`
/// render as literal braces; a brace not followed by an identifier and a
/// closing brace is literal too, so JSON examples need no escaping.
class PromptLibrary {
 public:
  PromptLibrary() = default;

  /// Loads every `<id>.txt` in `dir`.
  static PromptLibrary load(const std::filesystem::path& dir);

  void add(std::string id, std::string text);
  [[nodiscard]] bool contains(std::string_view id) const { return templates_.find(id) != templates_.end(); }

  /// Throws kTemplate for an unknown id or a placeholder without a field.
  [[nodiscard]] std::string render(std::string_view id, const PromptFields& fields) const;

 private:
  std::map<std::string, std::string, std::less<>> templates_;
};

/// Directory of the templates shipped with the source tree.
std::filesystem::path default_template_dir();

}  // namespace policysim
