#include "abcforge/abc.hpp"

#include <algorithm>
#include <cctype>

namespace abcforge::abc {

namespace {

bool is_note_letter(char c) {
    return (c >= 'A' && c <= 'G') || (c >= 'a' && c <= 'g');
}

bool is_accidental_char(char c) { return c == '^' || c == '=' || c == '_'; }

bool is_duration_char(char c) { return (c >= '0' && c <= '9') || c == '/'; }

bool is_field_line(std::string_view line) {
    return line.size() >= 2 && line[1] == ':' &&
           std::isalpha(static_cast<unsigned char>(line[0]));
}

bool is_continuation_line(std::string_view line) {
    return line.size() >= 2 && line[0] == '+' && line[1] == ':';
}

bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t") == std::string_view::npos;
}

// Characters that begin a recognized token. Anything else joins an Other run.
bool starts_known_token(char c) {
    return c == '"' || c == '[' || c == ']' || c == '|' || c == ':' ||
           is_accidental_char(c) || is_note_letter(c) || c == 'z' || c == 'Z' ||
           c == '!' || c == '.' || c == '-' || c == '(' || c == ')' ||
           is_duration_char(c) || c == '{';
}

MusicToken make_token(TokenKind kind, std::size_t begin, std::size_t end) {
    MusicToken t;
    t.kind = kind;
    t.begin = begin;
    t.end = end;
    return t;
}

} // namespace

LineKind classify_line(std::string_view line) {
    if (is_blank(line)) return LineKind::Blank;
    if (line[0] == '%') return LineKind::Comment;
    if (is_field_line(line) || is_continuation_line(line)) return LineKind::Metadata;
    return LineKind::Music;
}

bool is_key_declaration(std::string_view line) {
    return is_field_line(line) && line[0] == 'K';
}

std::vector<MusicToken> tokenize_music_line(std::string_view line) {
    std::vector<MusicToken> tokens;
    std::vector<std::size_t> open_chords;
    const std::size_t n = line.size();
    std::size_t i = 0;

    while (i < n) {
        const char c = line[i];

        if (c == '"') {
            const std::size_t close = line.find('"', i + 1);
            if (close == std::string_view::npos)
                throw TokenizeError("unterminated annotation", i);
            tokens.push_back(make_token(TokenKind::Annotation, i, close + 1));
            i = close + 1;
        } else if (c == '[') {
            if (i + 2 < n && line[i + 2] == ':' &&
                std::isalpha(static_cast<unsigned char>(line[i + 1]))) {
                const std::size_t close = line.find(']', i + 3);
                if (close == std::string_view::npos)
                    throw TokenizeError("unterminated inline field", i);
                tokens.push_back(make_token(TokenKind::InlineField, i, close + 1));
                i = close + 1;
            } else {
                open_chords.push_back(i);
                tokens.push_back(make_token(TokenKind::ChordStart, i, i + 1));
                ++i;
            }
        } else if (c == ']') {
            // A stray ']' is tolerated; only unclosed '[' is an error.
            if (!open_chords.empty()) open_chords.pop_back();
            tokens.push_back(make_token(TokenKind::ChordEnd, i, i + 1));
            ++i;
        } else if (c == '|') {
            std::size_t end = i + 1;
            if (end < n && (line[end] == '|' || line[end] == ']' || line[end] == ':'))
                ++end;
            tokens.push_back(make_token(TokenKind::Barline, i, end));
            i = end;
        } else if (c == ':') {
            if (i + 1 < n && (line[i + 1] == '|' || line[i + 1] == ':')) {
                tokens.push_back(make_token(TokenKind::Barline, i, i + 2));
                i += 2;
            } else {
                tokens.push_back(make_token(TokenKind::Other, i, i + 1));
                ++i;
            }
        } else if (is_accidental_char(c) || is_note_letter(c)) {
            const std::size_t start = i;
            std::size_t j = i;
            while (j < n && is_accidental_char(line[j])) ++j;
            if (j < n && is_note_letter(line[j])) {
                MusicToken t = make_token(TokenKind::Note, start, j + 1);
                t.accidental = std::string(line.substr(start, j - start));
                t.note_letter = line[j];
                t.letter_pos = j;
                std::size_t k = j + 1;
                while (k < n && (line[k] == '\'' || line[k] == ',')) {
                    t.octave_marks += line[k] == '\'' ? 1 : -1;
                    ++k;
                }
                const std::size_t dur_start = k;
                while (k < n && is_duration_char(line[k])) ++k;
                t.duration_text = std::string(line.substr(dur_start, k - dur_start));
                t.end = k;
                tokens.push_back(std::move(t));
                i = k;
            } else {
                // Accidental run with no note attached.
                tokens.push_back(make_token(TokenKind::Other, start, j));
                i = j;
            }
        } else if (c == 'z' || c == 'Z') {
            MusicToken t = make_token(TokenKind::Rest, i, i + 1);
            std::size_t k = i + 1;
            while (k < n && is_duration_char(line[k])) ++k;
            t.duration_text = std::string(line.substr(i + 1, k - i - 1));
            t.end = k;
            tokens.push_back(std::move(t));
            i = k;
        } else if (c == '!') {
            const std::size_t close = line.find('!', i + 1);
            if (close == std::string_view::npos) {
                tokens.push_back(make_token(TokenKind::Other, i, i + 1));
                ++i;
            } else {
                tokens.push_back(make_token(TokenKind::Decoration, i, close + 1));
                i = close + 1;
            }
        } else if (c == '.') {
            tokens.push_back(make_token(TokenKind::Decoration, i, i + 1));
            ++i;
        } else if (c == '-') {
            tokens.push_back(make_token(TokenKind::Tie, i, i + 1));
            ++i;
        } else if (c == '(' || c == ')') {
            tokens.push_back(make_token(TokenKind::Slur, i, i + 1));
            ++i;
        } else if (is_duration_char(c)) {
            std::size_t j = i;
            while (j < n && is_duration_char(line[j])) ++j;
            MusicToken t = make_token(TokenKind::Duration, i, j);
            t.duration_text = std::string(line.substr(i, j - i));
            tokens.push_back(std::move(t));
            i = j;
        } else if (c == '{') {
            // Grace-note group: opaque, letters inside are not Note tokens.
            const std::size_t close = line.find('}', i + 1);
            if (close == std::string_view::npos) {
                tokens.push_back(make_token(TokenKind::Other, i, i + 1));
                ++i;
            } else {
                tokens.push_back(make_token(TokenKind::Other, i, close + 1));
                i = close + 1;
            }
        } else {
            std::size_t j = i;
            while (j < n && !starts_known_token(line[j]) && line[j] != '}') ++j;
            if (j == i) ++j; // lone '}' or similar single char
            tokens.push_back(make_token(TokenKind::Other, i, j));
            i = j;
        }
    }

    if (!open_chords.empty())
        throw TokenizeError("unterminated chord", open_chords.back());
    return tokens;
}

namespace {

BodyLine build_line(std::string_view content, std::string_view terminator,
                    std::size_t line_offset) {
    BodyLine line;
    line.text = std::string(content);
    line.terminator = std::string(terminator);
    line.kind = classify_line(content);
    switch (line.kind) {
    case LineKind::Metadata:
        line.field_tag = content[0];
        line.field_value = std::string(content.substr(2));
        break;
    case LineKind::Music:
        try {
            line.tokens = tokenize_music_line(content);
        } catch (const TokenizeError& e) {
            throw ParseError(e.what(), line_offset + e.offset());
        }
        break;
    default:
        break;
    }
    return line;
}

} // namespace

AbcTune parse_tune(std::string_view text) {
    AbcTune tune;
    tune.raw_text = std::string(text);

    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view content;
        std::string_view terminator;
        if (nl == std::string_view::npos) {
            content = text.substr(pos);
            pos = text.size();
        } else {
            content = text.substr(pos, nl - pos);
            terminator = "\n";
            if (!content.empty() && content.back() == '\r') {
                content.remove_suffix(1);
                terminator = "\r\n";
            }
            pos = nl + 1;
        }
        const std::size_t line_offset = content.data() - text.data();
        tune.lines.push_back(build_line(content, terminator, line_offset));
    }

    while (tune.header_size < tune.lines.size() &&
           tune.lines[tune.header_size].kind == LineKind::Metadata)
        ++tune.header_size;
    return tune;
}

std::string serialize_tune(const AbcTune& tune) {
    std::string out;
    std::size_t total = 0;
    for (const auto& line : tune.lines) total += line.text.size() + line.terminator.size();
    out.reserve(total);
    for (const auto& line : tune.lines) {
        out += line.text;
        out += line.terminator;
    }
    return out;
}

std::vector<HeaderField> AbcTune::header_fields() const {
    std::vector<HeaderField> fields;
    fields.reserve(header_size);
    for (std::size_t i = 0; i < header_size; ++i)
        fields.push_back({lines[i].field_tag, lines[i].field_value});
    return fields;
}

std::span<const BodyLine> AbcTune::body_lines() const {
    return {lines.data() + header_size, lines.size() - header_size};
}

std::size_t AbcTune::music_line_count() const {
    return static_cast<std::size_t>(std::count_if(
        lines.begin(), lines.end(),
        [](const BodyLine& l) { return l.kind == LineKind::Music; }));
}

bool AbcTune::has_field(char tag) const {
    return std::any_of(lines.begin(), lines.end(), [tag](const BodyLine& l) {
        return l.kind == LineKind::Metadata && l.field_tag == tag;
    });
}

void AbcTune::rebuild_raw_text() { raw_text = serialize_tune(*this); }

ValidationReport validate(std::string_view text) {
    ValidationReport report;
    AbcTune tune;
    try {
        tune = parse_tune(text);
    } catch (const ParseError& e) {
        report.issues.push_back({Severity::Error, e.offset(), e.what()});
        report.is_valid = false;
        return report;
    }

    if (!tune.has_field('X'))
        report.issues.push_back({Severity::Error, 0, "missing X (index) field"});
    if (!tune.has_field('K'))
        report.issues.push_back({Severity::Error, 0, "missing K (key) field"});
    if (tune.music_line_count() == 0)
        report.issues.push_back({Severity::Error, 0, "no music lines"});

    report.is_valid = std::none_of(
        report.issues.begin(), report.issues.end(),
        [](const ValidationIssue& i) { return i.severity == Severity::Error; });
    return report;
}

std::vector<TuneBlock> split_tune_blocks(std::string_view text) {
    std::vector<TuneBlock> blocks;
    TuneBlock current;
    bool has_current = false;

    auto flush = [&] {
        if (has_current && !current.text.empty()) blocks.push_back(std::move(current));
        current = {};
        has_current = false;
    };
    auto append_to = [&](bool is_tune, std::string_view chunk, std::size_t offset) {
        if (!has_current || current.is_tune != is_tune) {
            flush();
            current.is_tune = is_tune;
            current.offset = offset;
            has_current = true;
        }
        current.text += chunk;
    };

    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        const std::size_t line_end = nl == std::string_view::npos ? text.size() : nl + 1;
        std::string_view full = text.substr(pos, line_end - pos);
        std::string_view content = full;
        while (!content.empty() && (content.back() == '\n' || content.back() == '\r'))
            content.remove_suffix(1);

        if (content.size() >= 2 && content[0] == 'X' && content[1] == ':') {
            flush(); // every "X:" line opens a fresh tune block
            append_to(true, full, pos);
        } else if (is_blank(content)) {
            append_to(false, full, pos); // blank lines separate tunes
        } else {
            append_to(current.is_tune && has_current, full, pos);
        }
        pos = line_end;
    }
    flush();
    return blocks;
}

std::size_t utf8_length(std::string_view text) {
    std::size_t count = 0;
    for (unsigned char b : text)
        if ((b & 0xC0) != 0x80) ++count;
    return count;
}

} // namespace abcforge::abc
