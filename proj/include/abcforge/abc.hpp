#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace abcforge::abc {

/// Classification of a single line of an ABC document.
enum class LineKind {
    Metadata, ///< header field ("X:1", "K:C") or "+:" continuation
    Music,    ///< anything carrying tune body notation
    Comment,  ///< starts with '%'
    Blank,    ///< empty or whitespace only
};

enum class TokenKind {
    Note,
    Rest,
    Barline,
    InlineField,
    ChordStart,
    ChordEnd,
    Annotation,
    Duration,
    Tie,
    Slur,
    Decoration,
    Other,
};

/// One lexical element of a music line. Token spans tile the line: they are
/// contiguous, non-overlapping, and cover every byte.
struct MusicToken {
    TokenKind kind = TokenKind::Other;
    std::size_t begin = 0; ///< byte offset within the line, inclusive
    std::size_t end = 0;   ///< byte offset within the line, exclusive

    // Note-only payload.
    char note_letter = '\0';    ///< in {A..G, a..g} iff kind == Note
    std::size_t letter_pos = 0; ///< byte offset of note_letter within the line
    std::string accidental;     ///< leading run of ^, = or _
    int octave_marks = 0;       ///< +1 per apostrophe, -1 per comma

    std::string duration_text; ///< digits and '/' for Note/Rest/Duration

    std::size_t size() const { return end - begin; }
};

/// One line of a tune, with its original terminator so serialization can be
/// byte-exact. Header lines and body lines use the same representation.
struct BodyLine {
    LineKind kind = LineKind::Blank;
    std::string text;       ///< line content, terminator excluded
    std::string terminator; ///< "", "\n" or "\r\n"

    std::vector<MusicToken> tokens; ///< populated iff kind == Music

    char field_tag = '\0';   ///< iff kind == Metadata
    std::string field_value; ///< text after the ':', exactly as written
};

struct HeaderField {
    char tag = '\0';
    std::string value;
};

/// Parsed ABC document. `lines` holds every line of the input in order; the
/// first `header_size` entries are the leading run of field lines (the tune
/// header). Lines after that may still be Metadata (mid-tune fields).
struct AbcTune {
    std::vector<BodyLine> lines;
    std::size_t header_size = 0;
    std::string raw_text;

    std::vector<HeaderField> header_fields() const;
    std::span<const BodyLine> body_lines() const;
    std::size_t music_line_count() const;

    /// True if any line anywhere in the tune is a field line with this tag.
    bool has_field(char tag) const;

    /// Recomputes raw_text from lines. Transforms call this after editing so
    /// the invariant serialize_tune(t) == t.raw_text keeps holding.
    void rebuild_raw_text();
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::string message, std::size_t offset)
        : std::runtime_error(std::move(message)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class TokenizeError : public std::runtime_error {
public:
    TokenizeError(std::string message, std::size_t offset)
        : std::runtime_error(std::move(message)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Classifies one line (no terminator). Total: unrecognized lines are Music.
LineKind classify_line(std::string_view line);

/// True for Metadata lines whose field tag is 'K'.
bool is_key_declaration(std::string_view line);

/// Splits a music line into a span-tiling token list.
/// Throws TokenizeError (offset within the line) on an unterminated
/// annotation, inline field, or chord.
std::vector<MusicToken> tokenize_music_line(std::string_view line);

/// Parses a whole ABC document. Byte-exact: serialize_tune(parse_tune(t))
/// returns t for every accepted input. Throws ParseError with the byte
/// offset into `text` where tokenization failed.
AbcTune parse_tune(std::string_view text);

/// Concatenates all lines with their original terminators.
std::string serialize_tune(const AbcTune& tune);

enum class Severity { Error, Warning };

struct ValidationIssue {
    Severity severity = Severity::Error;
    std::size_t offset = 0;
    std::string message;
};

struct ValidationReport {
    bool is_valid = false;
    std::vector<ValidationIssue> issues;
};

/// Never throws; problems are reported inside the returned report. A tune is
/// valid iff it parses, carries an X field and a K field, and has at least
/// one music line.
ValidationReport validate(std::string_view text);

/// Segment of a multi-tune file. Tune segments start at an "X:" line and run
/// up to (not including) the next blank line; everything else (separators,
/// preambles, stray text) is passed through as non-tune segments.
/// Concatenating all segment texts reproduces the input byte-exact.
struct TuneBlock {
    std::string text;
    std::size_t offset = 0; ///< byte offset of the segment in the input
    bool is_tune = false;
};

std::vector<TuneBlock> split_tune_blocks(std::string_view text);

/// Counts Unicode code points (UTF-8 bytes that are not continuation bytes).
/// All "length" accounting in the toolkit uses this.
std::size_t utf8_length(std::string_view text);

} // namespace abcforge::abc
