#include "teachloop/llm/templates.hpp"

#include <fstream>
#include <sstream>

#include "teachloop/core/error.hpp"

namespace teachloop::llm {

std::string template_module(const std::string& template_id) {
  return template_id.substr(0, template_id.find('/'));
}

TemplateLibrary::TemplateLibrary(std::filesystem::path root) : root_(std::move(root)) {}

TemplateLibrary TemplateLibrary::bundled() {
  return TemplateLibrary(std::filesystem::path(TEACHLOOP_ASSET_DIR) / "templates");
}

std::filesystem::path TemplateLibrary::resolve(const std::string& template_id) const {
  const auto slash = template_id.find('/');
  const std::string module = template_id.substr(0, slash);
  const std::string domain =
      slash == std::string::npos ? "default" : template_id.substr(slash + 1);
  auto specific = root_ / module / (domain + ".txt");
  if (std::filesystem::exists(specific)) return specific;
  auto fallback = root_ / module / "default.txt";
  if (std::filesystem::exists(fallback)) return fallback;
  return {};
}

bool TemplateLibrary::has(const std::string& template_id) const {
  return !resolve(template_id).empty();
}

std::string TemplateLibrary::render(const std::string& template_id,
                                    const TemplateVars& vars) const {
  const auto path = resolve(template_id);
  if (path.empty()) {
    throw Error(ErrorCode::kTemplateMissing,
                "no template asset for '" + template_id + "' under " + root_.string());
  }
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("{{", pos);
    if (open == std::string::npos) {
      out.append(text, pos);
      break;
    }
    const auto close = text.find("}}", open + 2);
    if (close == std::string::npos) {
      out.append(text, pos);
      break;
    }
    out.append(text, pos, open - pos);
    const std::string name = text.substr(open + 2, close - open - 2);
    auto it = vars.find(name);
    if (it == vars.end()) {
      throw Error(ErrorCode::kTemplateMissing,
                  "template '" + template_id + "' needs variable '" + name + "'");
    }
    out += it->second;
    pos = close + 2;
  }
  return out;
}

}  // namespace teachloop::llm
