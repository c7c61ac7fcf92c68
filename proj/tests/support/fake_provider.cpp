// Line-JSON substitution provider used by the tests.
//   echo     returns the text unchanged
//   fixed    replaces every word outside the protected span with "zzz"
//   rogue    replaces every word, protected span included
//   drop     removes the last word
//   error    answers {"error": ...}
//   garbage  answers a line that is not JSON
//   crash    exits without answering
#include <iostream>
#include <string>

#include <nlohmann/json.hpp>

namespace {

bool is_word_char(char c) { return c != ' ' && c != '\t' && c != '\n'; }

std::string rewrite(const std::string& text, const nlohmann::json& span, bool respect_span) {
  std::size_t begin = std::string::npos, end = std::string::npos;
  if (respect_span && span.is_array()) {
    begin = span[0].get<std::size_t>();
    end = span[1].get<std::size_t>();
  }
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_char(text[i])) {
      out += text[i++];
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_char(text[j])) ++j;
    const bool guarded = begin != std::string::npos && i < end && j > begin;
    bool alpha = true;
    for (std::size_t k = i; k < j; ++k) alpha = alpha && std::isalpha(static_cast<unsigned char>(text[k]));
    out += (guarded || !alpha) ? text.substr(i, j - i) : "zzz";
    i = j;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "echo";
  std::string line;
  while (std::getline(std::cin, line)) {
    if (mode == "crash") return 3;
    if (mode == "garbage") {
      std::cout << "not json at all" << std::endl;
      continue;
    }
    const auto req = nlohmann::json::parse(line);
    const std::string text = req.at("text").get<std::string>();
    nlohmann::json resp;
    if (mode == "error") {
      resp["error"] = "model not loaded";
    } else if (mode == "fixed") {
      resp["text"] = rewrite(text, req.at("protected_span"), true);
    } else if (mode == "rogue") {
      resp["text"] = rewrite(text, req.at("protected_span"), false);
    } else if (mode == "drop") {
      const auto cut = text.find_last_of(' ');
      resp["text"] = cut == std::string::npos ? std::string() : text.substr(0, cut);
    } else {
      resp["text"] = text;
    }
    std::cout << resp.dump() << std::endl;
  }
  return 0;
}
