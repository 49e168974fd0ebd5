#include "policysim/toxicity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <vector>

#include "policysim/error.hpp"

namespace policysim {

namespace {

// Profanity, insults and aggression markers. Matching is on whole
// lowercase word tokens.
const char* const kDefaultLexicon[] = {
    "idiot",  "idiots",   "idiotic", "stupid",  "moron",    "morons",   "dumb",    "pathetic", "liar",
    "liars",  "garbage",  "trash",   "clown",   "clowns",   "disgusting", "shut",  "loser",    "losers",
    "hate",   "scum",     "fool",    "fools",   "jerk",     "crap",     "damn",    "hell",     "shit",
    "fuck",   "fucking",  "bitch",   "bastard", "ass",      "asshole",  "kill",    "die",      "traitor",
    "traitors", "vile",   "filthy",  "degenerate", "brainless", "nonsense", "freak", "worthless", "ugly",
    "retard", "imbecile", "sick",    "evil",    "coward",   "cowards",
};

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '\'' || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

LexiconToxicityScorer::LexiconToxicityScorer()
    : lexicon_(std::begin(kDefaultLexicon), std::end(kDefaultLexicon)) {}

LexiconToxicityScorer::LexiconToxicityScorer(std::set<std::string, std::less<>> lexicon)
    : lexicon_(std::move(lexicon)) {}

double LexiconToxicityScorer::score_text(std::string_view text) const {
  if (text.empty()) throw Error(ErrorCode::kInvalidArgument, "toxicity scoring needs non-empty text");
  const auto tokens = word_tokens(text);
  if (tokens.empty()) return 0.0;
  const auto hits = std::count_if(tokens.begin(), tokens.end(), [&](const std::string& t) { return lexicon_.contains(t); });
  if (hits == 0) return 0.0;
  if (static_cast<std::size_t>(hits) == tokens.size()) return kCap;
  const double density = static_cast<double>(hits) / static_cast<double>(tokens.size());
  return kCap * std::tanh(kKappa * density) / std::tanh(kKappa);
}

ToxicityScore RemoteToxicityScorer::score(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::kInvalidArgument, "toxicity scoring needs non-empty text");
  try {
    const auto reply = post_json(endpoint_, {{"text", std::string(text)}});
    const double v = reply.at("score").get<double>();
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::kParse, "toxicity score outside [0,1]");
    return {v, false};
  } catch (const std::exception&) {
    return {fallback_.score_text(text), true};
  }
}

}  // namespace policysim
