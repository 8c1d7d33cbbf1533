#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace teachloop::llm {

using TemplateVars = std::map<std::string, std::string>;

/// Prompt templates are text assets under `<root>/<module>/<domain>.txt`,
/// falling back to `<root>/<module>/default.txt`. Ids are "module/domain".
/// Placeholders are written `{{name}}`.
class TemplateLibrary {
 public:
  explicit TemplateLibrary(std::filesystem::path root);

  /// The bundled asset directory.
  static TemplateLibrary bundled();

  bool has(const std::string& template_id) const;
  std::string render(const std::string& template_id, const TemplateVars& vars) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path resolve(const std::string& template_id) const;

  std::filesystem::path root_;
};

/// "skill_annotation/math" -> "skill_annotation"
std::string template_module(const std::string& template_id);

}  // namespace teachloop::llm
