#include "dyadloop/textmetrics.hpp"

#include "dyadloop/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <locale>
#include <numeric>
#include <optional>
#include <unordered_map>

namespace dyadloop {

namespace {

constexpr char32_t kInvalid = 0xFFFFFFFF;

// Decodes one code point at `pos`, advancing it. Malformed sequences consume
// one byte and yield kInvalid.
char32_t decode_utf8(std::string_view s, std::size_t& pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return kInvalid;
    }
    if (pos + static_cast<std::size_t>(len) > s.size()) {
        ++pos;
        return kInvalid;
    }
    for (int k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[pos + static_cast<std::size_t>(k)]);
        if ((b & 0xC0) != 0x80) {
            ++pos;
            return kInvalid;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        ++pos;
        return kInvalid;
    }
    pos += static_cast<std::size_t>(len);
    return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Unicode character classes come from the C library's UTF-8 locale tables.
// Without one, only ASCII is classified and everything above it counts as a
// letter.
class CharClasses {
public:
    CharClasses() {
        for (const char* name : {"C.UTF-8", "C.utf8", "en_US.UTF-8"}) {
            try {
                locale_ = std::locale(name);
                facet_ = &std::use_facet<std::ctype<wchar_t>>(*locale_);
                break;
            } catch (const std::runtime_error&) {
            }
        }
    }

    bool is_alnum(char32_t cp) const {
        if (cp == kInvalid) {
            return false;
        }
        if (cp < 0x80) {
            return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
        }
        if (facet_ == nullptr) {
            return true;
        }
        return facet_->is(std::ctype_base::alnum, static_cast<wchar_t>(cp));
    }

    char32_t to_lower(char32_t cp) const {
        if (cp < 0x80) {
            return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
        }
        if (facet_ == nullptr) {
            return cp;
        }
        return static_cast<char32_t>(facet_->tolower(static_cast<wchar_t>(cp)));
    }

private:
    std::optional<std::locale> locale_;
    const std::ctype<wchar_t>* facet_ = nullptr;
};

const CharClasses& char_classes() {
    static const CharClasses classes;
    return classes;
}

std::vector<std::string> distinct(const TokenList& list) {
    std::vector<std::string> v = list.tokens();
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

std::unordered_map<std::string, std::size_t> count_ngrams(const TokenList& tokens, int n) {
    std::unordered_map<std::string, std::size_t> counts;
    const auto order = static_cast<std::size_t>(n);
    if (tokens.size() < order) {
        return counts;
    }
    for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < order; ++k) {
            key.push_back('\x1f');
            key += tokens[i + k];
        }
        ++counts[key];
    }
    return counts;
}

} // namespace

TokenList::TokenList(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (const auto& t : tokens_) {
        if (t.empty()) {
            throw ContractError("token list contains an empty token");
        }
    }
}

TokenList::TokenList(std::initializer_list<std::string> tokens) : TokenList(std::vector<std::string>(tokens)) {}

std::vector<TokenSpan> token_spans(std::string_view text) {
    const auto& classes = char_classes();
    std::vector<TokenSpan> spans;
    std::size_t pos = 0;
    constexpr std::size_t kNone = std::string_view::npos;
    std::size_t start = kNone;
    while (pos < text.size()) {
        const std::size_t at = pos;
        const char32_t cp = decode_utf8(text, pos);
        if (classes.is_alnum(cp)) {
            if (start == kNone) {
                start = at;
            }
        } else if (start != kNone) {
            spans.push_back({start, at});
            start = kNone;
        }
    }
    if (start != kNone) {
        spans.push_back({start, text.size()});
    }
    return spans;
}

TokenList tokenize(std::string_view text) {
    const auto& classes = char_classes();
    std::vector<std::string> tokens;
    for (const auto& span : token_spans(text)) {
        const std::string_view raw = text.substr(span.begin, span.end - span.begin);
        std::string lowered;
        lowered.reserve(raw.size());
        std::size_t pos = 0;
        while (pos < raw.size()) {
            encode_utf8(classes.to_lower(decode_utf8(raw, pos)), lowered);
        }
        tokens.push_back(std::move(lowered));
    }
    return TokenList(std::move(tokens));
}

double jaccard_distance(const TokenList& a, const TokenList& b) {
    if (a.empty() && b.empty()) {
        return 0.0;
    }
    const auto sa = distinct(a);
    const auto sb = distinct(b);
    std::vector<std::string> common;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
    const double inter = static_cast<double>(common.size());
    const double uni = static_cast<double>(sa.size() + sb.size()) - inter;
    return 1.0 - inter / uni;
}

NgramPrecision modified_precision(const TokenList& candidate, const TokenList& reference, int n) {
    if (n < 1) {
        throw ContractError("n-gram order must be >= 1");
    }
    NgramPrecision out;
    if (candidate.size() < static_cast<std::size_t>(n)) {
        return out;
    }
    const auto cand = count_ngrams(candidate, n);
    const auto ref = count_ngrams(reference, n);
    for (const auto& [gram, count] : cand) {
        out.total += count;
        if (auto it = ref.find(gram); it != ref.end()) {
            out.clipped += std::min(count, it->second);
        }
    }
    return out;
}

std::vector<double> BleuConfig::resolved_weights() const {
    if (weights.empty()) {
        return std::vector<double>(static_cast<std::size_t>(std::max(max_order, 1)), 1.0 / std::max(max_order, 1));
    }
    return weights;
}

void BleuConfig::validate() const {
    if (max_order < 1) {
        throw ContractError("BLEU max_order must be >= 1");
    }
    if (weights.empty()) {
        return;
    }
    if (weights.size() != static_cast<std::size_t>(max_order)) {
        throw ContractError("BLEU weights must have max_order entries");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) {
            throw ContractError("BLEU weights must be non-negative");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ContractError("BLEU weights must sum to 1");
    }
}

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len) {
    if (candidate_len >= reference_len) {
        return 1.0;
    }
    if (candidate_len == 0) {
        return 0.0;
    }
    return std::exp(1.0 - static_cast<double>(reference_len) / static_cast<double>(candidate_len));
}

double bleu(const TokenList& candidate, const TokenList& reference, const BleuConfig& cfg) {
    cfg.validate();
    if (candidate.empty() || reference.empty()) {
        return candidate.empty() && reference.empty() ? 1.0 : 0.0;
    }
    const std::size_t usable =
        std::min({static_cast<std::size_t>(cfg.max_order), candidate.size(), reference.size()});
    const auto all_weights = cfg.resolved_weights();
    std::vector<double> w(all_weights.begin(), all_weights.begin() + static_cast<std::ptrdiff_t>(usable));
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) {
        x = wsum > 0.0 ? x / wsum : 1.0 / static_cast<double>(usable);
    }

    double log_sum = 0.0;
    for (std::size_t k = 0; k < usable; ++k) {
        if (w[k] == 0.0) {
            continue;
        }
        const auto prec = modified_precision(candidate, reference, static_cast<int>(k + 1));
        double clipped = static_cast<double>(prec.clipped);
        if (prec.clipped == 0) {
            if (!cfg.smoothing) {
                return 0.0;
            }
            clipped = BleuConfig::kSmoothingEpsilon;
        }
        log_sum += w[k] * std::log(clipped / static_cast<double>(prec.total));
    }
    return brevity_penalty(candidate.size(), reference.size()) * std::exp(log_sum);
}

double bleu_distance(const TokenList& candidate, const TokenList& reference, const BleuConfig& cfg) {
    return std::clamp(1.0 - bleu(candidate, reference, cfg), 0.0, 1.0);
}

} // namespace dyadloop
