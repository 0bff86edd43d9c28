#include "topicrec/text.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace topicrec {

namespace {

// Decodes the codepoint starting at s[i]; advances i past it.
// Malformed bytes decode as U+FFFD one byte at a time.
uint32_t decode_utf8(const std::string& s, size_t& i) {
    const auto byte = [&](size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char b0 = byte(i);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    auto cont = [&](size_t k) { return k < s.size() && (byte(k) & 0xC0) == 0x80; };
    if ((b0 & 0xE0) == 0xC0 && cont(i + 1)) {
        const uint32_t cp = ((b0 & 0x1Fu) << 6) | (byte(i + 1) & 0x3Fu);
        i += 2;
        return cp;
    }
    if ((b0 & 0xF0) == 0xE0 && cont(i + 1) && cont(i + 2)) {
        const uint32_t cp = ((b0 & 0x0Fu) << 12) | ((byte(i + 1) & 0x3Fu) << 6) | (byte(i + 2) & 0x3Fu);
        i += 3;
        return cp;
    }
    if ((b0 & 0xF8) == 0xF0 && cont(i + 1) && cont(i + 2) && cont(i + 3)) {
        const uint32_t cp = ((b0 & 0x07u) << 18) | ((byte(i + 1) & 0x3Fu) << 12) |
                            ((byte(i + 2) & 0x3Fu) << 6) | (byte(i + 3) & 0x3Fu);
        i += 4;
        return cp;
    }
    ++i;
    return 0xFFFD;
}

void encode_utf8(uint32_t cp, std::string& out) {
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

bool is_letter(uint32_t cp) {
    if ((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z')) return true;
    if (cp >= 0xC0 && cp <= 0xFF) return cp != 0xD7 && cp != 0xF7;  // Latin-1, minus × ÷
    if (cp >= 0x100 && cp <= 0x17F) return true;                    // Latin Extended-A
    return false;
}

uint32_t to_lower(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
    if (cp >= 0x100 && cp <= 0x17F) {
        // Latin Extended-A alternates upper/lower; exceptions handled as-is.
        if (cp == 0x130) return 'i';   // İ
        if (cp == 0x131) return cp;    // ı is already lowercase
        if (cp >= 0x139 && cp <= 0x148) return (cp % 2 == 1) ? cp + 1 : cp;
        if (cp >= 0x179 && cp <= 0x17E) return (cp % 2 == 1) ? cp + 1 : cp;
        if (cp == 0x178) return 0xFF;  // Ÿ
        return (cp % 2 == 0) ? cp + 1 : cp;
    }
    return cp;
}

}  // namespace

Stemmer identity_stemmer() {
    return [](const std::string& term) { return term; };
}

std::vector<std::string> tokenize_letters(const std::string& utf8_text) {
    std::vector<std::string> tokens;
    std::string current;
    size_t i = 0;
    while (i < utf8_text.size()) {
        const uint32_t cp = decode_utf8(utf8_text, i);
        if (is_letter(cp)) {
            encode_utf8(to_lower(cp), current);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string normalize_annotation(const std::string& s) {
    std::string out;
    bool pending_space = false;
    size_t i = 0;
    while (i < s.size()) {
        const uint32_t cp = decode_utf8(s, i);
        const bool ws = cp == ' ' || cp == '\t' || cp == '\r' || cp == '\n' || cp == 0xA0;
        if (ws) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        encode_utf8(to_lower(cp), out);
    }
    return out;
}

std::set<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stopword file: " + path);
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        const std::string w = normalize_annotation(line);
        if (!w.empty()) words.insert(w);
    }
    return words;
}

}  // namespace topicrec
