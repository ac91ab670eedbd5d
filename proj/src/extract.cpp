#include "locrank/corpus.hpp"
#include "locrank/text.hpp"

#include "grammar_table.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <memory>
#include <thread>

namespace locrank {

namespace {

using detail::GrammarSpec;

struct ParserDeleter {
    void operator()(TSParser* p) const { ts_parser_delete(p); }
};
struct TreeDeleter {
    void operator()(TSTree* t) const { ts_tree_delete(t); }
};
using ParserPtr = std::unique_ptr<TSParser, ParserDeleter>;
using TreePtr = std::unique_ptr<TSTree, TreeDeleter>;

class CursorGuard {
public:
    explicit CursorGuard(TSNode root) : cursor_(ts_tree_cursor_new(root)) {}
    ~CursorGuard() { ts_tree_cursor_delete(&cursor_); }
    CursorGuard(const CursorGuard&) = delete;
    CursorGuard& operator=(const CursorGuard&) = delete;
    TSTreeCursor* get() { return &cursor_; }

private:
    TSTreeCursor cursor_;
};

/// Line table over a source buffer; lines exclude their terminating '\n'.
class LineIndex {
public:
    explicit LineIndex(std::string_view src) : src_(src) {
        if (src.empty()) {
            return;
        }
        starts_.push_back(0);
        for (std::size_t i = 0; i < src.size(); ++i) {
            if (src[i] == '\n' && i + 1 < src.size()) {
                starts_.push_back(i + 1);
            }
        }
    }

    std::size_t line_count() const noexcept { return starts_.size(); }

    std::string_view slice(int first, int last) const {
        const auto begin = starts_[static_cast<std::size_t>(first - 1)];
        std::size_t end = 0;
        if (static_cast<std::size_t>(last) < starts_.size()) {
            end = starts_[static_cast<std::size_t>(last)] - 1;
        } else {
            end = src_.size();
            if (end > 0 && src_[end - 1] == '\n') {
                --end;
            }
        }
        return src_.substr(begin, end - begin);
    }

private:
    std::string_view src_;
    std::vector<std::size_t> starts_;
};

TSNode field(TSNode node, const char* name) {
    return ts_node_child_by_field_name(node, name, static_cast<std::uint32_t>(std::strlen(name)));
}

std::string_view node_text(TSNode node, std::string_view src) {
    const auto begin = ts_node_start_byte(node);
    const auto end = ts_node_end_byte(node);
    return src.substr(begin, end - begin);
}

std::string_view kind(TSNode node) { return ts_node_type(node); }

int start_line(TSNode node) { return static_cast<int>(ts_node_start_point(node).row) + 1; }

std::string anon_name(int line) { return "<anon@" + std::to_string(line) + ">"; }

// Removes balanced <...> groups ("Foo<T>::bar" -> "Foo::bar").
std::string strip_template_args(std::string_view name) {
    if (name.find("operator") != std::string_view::npos) {
        return std::string(name);
    }
    std::string out;
    int depth = 0;
    for (char c : name) {
        if (c == '<') {
            ++depth;
        } else if (c == '>' && depth > 0) {
            --depth;
        } else if (depth == 0) {
            out.push_back(c);
        }
    }
    return out;
}

// Collapses whitespace and maps "::" / "\" scope separators to ".".
std::string normalize_name(std::string_view raw) {
    std::string stripped = strip_template_args(raw);
    std::string out;
    for (std::size_t i = 0; i < stripped.size(); ++i) {
        const char c = stripped[i];
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            continue;
        }
        if (c == ':' && i + 1 < stripped.size() && stripped[i + 1] == ':') {
            out.push_back('.');
            ++i;
        } else if (c == '\\') {
            out.push_back('.');
        } else {
            out.push_back(c);
        }
    }
    while (!out.empty() && out.front() == '.') {
        out.erase(out.begin());
    }
    if (out.size() >= 2 && (out.front() == '"' || out.front() == '\'') && out.back() == out.front()) {
        out = out.substr(1, out.size() - 2);
    }
    return out;
}

TSNode first_descendant_of_kind(TSNode root, std::string_view wanted) {
    CursorGuard guard(root);
    auto* cursor = guard.get();
    for (;;) {
        TSNode node = ts_tree_cursor_current_node(cursor);
        if (kind(node) == wanted) {
            return node;
        }
        if (ts_tree_cursor_goto_first_child(cursor)) {
            continue;
        }
        while (!ts_tree_cursor_goto_next_sibling(cursor)) {
            if (!ts_tree_cursor_goto_parent(cursor)) {
                return TSNode{};
            }
        }
    }
}

// C/C++: follow the declarator chain down to the function_declarator's name.
std::string c_function_name(TSNode def, std::string_view src) {
    TSNode d = field(def, "declarator");
    while (!ts_node_is_null(d)) {
        if (kind(d) == "function_declarator") {
            TSNode name = field(d, "declarator");
            return ts_node_is_null(name) ? std::string() : normalize_name(node_text(name, src));
        }
        TSNode next = field(d, "declarator");
        if (ts_node_is_null(next)) {
            const auto count = ts_node_named_child_count(d);
            if (count == 0) {
                break;
            }
            next = ts_node_named_child(d, count - 1);
        }
        d = next;
    }
    return {};
}

// Name of the variable/property an anonymous function or class is bound to.
std::string binding_name(TSNode node, std::string_view src) {
    TSNode parent = ts_node_parent(node);
    if (ts_node_is_null(parent)) {
        return {};
    }
    const auto pk = kind(parent);
    TSNode target{};
    if (pk == "variable_declarator") {
        target = field(parent, "name");
    } else if (pk == "assignment_expression") {
        target = field(parent, "left");
    } else if (pk == "pair") {
        target = field(parent, "key");
    } else if (pk == "public_field_definition") {
        target = field(parent, "name");
    } else if (pk == "field_definition") {
        target = field(parent, "property");
    } else if (pk == "expression_list" && ts_node_named_child_count(parent) == 1) {
        // Go: `h := func() {…}` and `var h = func() {…}`
        const TSNode decl = ts_node_parent(parent);
        const auto dk = ts_node_is_null(decl) ? std::string_view() : kind(decl);
        TSNode left{};
        if (dk == "short_var_declaration" || dk == "assignment_statement") {
            left = field(decl, "left");
        } else if (dk == "var_spec") {
            left = decl;
        }
        if (!ts_node_is_null(left)) {
            const bool spec_form = dk == "var_spec";
            const TSNode first = spec_form ? field(left, "name") : ts_node_named_child(left, 0);
            const auto names = spec_form ? 1u : ts_node_named_child_count(left);
            if (names == 1 && !ts_node_is_null(first) && kind(first) == "identifier") {
                target = first;
            }
        }
    }
    if (ts_node_is_null(target)) {
        return {};
    }
    // Only bind to readable names; destructuring patterns stay anonymous.
    const auto tk = kind(target);
    if (tk == "object_pattern" || tk == "array_pattern") {
        return {};
    }
    return normalize_name(node_text(target, src));
}

std::string function_name(const GrammarSpec& spec, TSNode node, std::string_view src) {
    std::string name;
    if (spec.language == Language::c || spec.language == Language::cpp) {
        name = c_function_name(node, src);
    } else {
        TSNode n = field(node, "name");
        if (!ts_node_is_null(n)) {
            name = normalize_name(node_text(n, src));
        }
    }
    if (name.empty() && spec.anonymous.contains(kind(node))) {
        name = binding_name(node, src);
    }
    if (name.empty()) {
        name = anon_name(start_line(node));
    }
    return name;
}

// Go methods are qualified by their receiver type.
std::string go_receiver(TSNode method, std::string_view src) {
    TSNode receiver = field(method, "receiver");
    if (ts_node_is_null(receiver)) {
        return {};
    }
    TSNode type = first_descendant_of_kind(receiver, "type_identifier");
    return ts_node_is_null(type) ? std::string() : std::string(node_text(type, src));
}

bool has_named_child_of_kind(TSNode node, std::string_view wanted) {
    const auto count = ts_node_named_child_count(node);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (kind(ts_node_named_child(node, i)) == wanted) {
            return true;
        }
    }
    return false;
}

// Returns false when `node` does not open a scope after all (e.g. a Java
// object creation without an anonymous class body).
bool scope_name(const GrammarSpec& spec, TSNode node, std::string_view src, std::string& out) {
    const auto k = kind(node);
    out.clear();
    if (spec.language == Language::rust && k == "impl_item") {
        TSNode type = field(node, "type");
        if (!ts_node_is_null(type)) {
            out = normalize_name(node_text(type, src));
        }
        return true;
    }
    if (spec.language == Language::java && k == "object_creation_expression") {
        if (!has_named_child_of_kind(node, "class_body")) {
            return false;
        }
        out = anon_name(start_line(node));
        return true;
    }
    TSNode name = field(node, "name");
    if (!ts_node_is_null(name)) {
        out = normalize_name(node_text(name, src));
    } else if (k == "class") {
        out = binding_name(node, src);
    }
    return true;
}

std::string join_chain(const std::vector<std::pair<std::uint32_t, std::string>>& chain) {
    std::string out;
    for (const auto& [depth, name] : chain) {
        if (name.empty()) {
            continue;
        }
        if (!out.empty()) {
            out.push_back('.');
        }
        out += name;
    }
    return out;
}

std::vector<CodeUnit> extract_with_parser(TSParser* parser, std::string_view repo,
                                          std::string_view rel_path, Language language,
                                          std::string_view source, Diagnostics* diagnostics) {
    const auto& spec = detail::grammar_spec(language);
    if (!ts_parser_set_language(parser, spec.grammar())) {
        warn(diagnostics, std::string(rel_path) + ": grammar ABI mismatch for " +
                              std::string(language_name(language)) + ", file skipped");
        return {};
    }
    TreePtr tree(ts_parser_parse_string(parser, nullptr, source.data(),
                                        static_cast<std::uint32_t>(source.size())));
    if (!tree) {
        warn(diagnostics, std::string(rel_path) + ": parse failed, file skipped");
        return {};
    }
    TSNode root = ts_tree_root_node(tree.get());
    if (kind(root) == "ERROR") {
        warn(diagnostics, std::string(rel_path) + ": unparseable, file skipped");
        return {};
    }
    if (ts_node_has_error(root)) {
        warn(diagnostics, std::string(rel_path) + ": syntax errors, extracted recoverable functions");
    }

    const LineIndex lines(source);
    std::vector<CodeUnit> units;
    std::vector<std::pair<std::uint32_t, std::string>> chain;  // (depth, name)
    std::unordered_map<std::string, int> seen_ids;

    CursorGuard guard(root);
    auto* cursor = guard.get();
    std::uint32_t depth = 0;
    for (;;) {
        TSNode node = ts_tree_cursor_current_node(cursor);
        while (!chain.empty() && chain.back().first >= depth) {
            chain.pop_back();
        }
        const auto k = kind(node);
        if (spec.functions.contains(k) || spec.anonymous.contains(k)) {
            std::string name = function_name(spec, node, source);
            if (language == Language::go && k == "method_declaration") {
                if (auto recv = go_receiver(node, source); !recv.empty()) {
                    name = recv + "." + name;
                }
            }
            const std::string prefix = join_chain(chain);
            std::string qualified = prefix.empty() ? name : prefix + "." + name;

            const int first = start_line(node);
            const auto end_point = ts_node_end_point(node);
            int last = static_cast<int>(end_point.row) + 1;
            if (end_point.column == 0 && last > first) {
                --last;
            }
            last = std::min<int>(last, static_cast<int>(lines.line_count()));

            std::string id = make_unit_id(rel_path, qualified, first);
            // Two literals on one line would collide; suffix in source order.
            if (int dup = ++seen_ids[id]; dup > 1) {
                qualified += "#" + std::to_string(dup);
                id = make_unit_id(rel_path, qualified, first);
            }
            units.push_back(CodeUnit{std::move(id), std::string(repo), std::string(rel_path),
                                     language, qualified, first, last,
                                     std::string(lines.slice(first, last))});
            chain.emplace_back(depth, std::move(name));
        } else if (spec.scopes.contains(k)) {
            std::string name;
            if (scope_name(spec, node, source, name)) {
                chain.emplace_back(depth, std::move(name));
            }
        }

        if (ts_tree_cursor_goto_first_child(cursor)) {
            ++depth;
            continue;
        }
        bool done = false;
        while (!ts_tree_cursor_goto_next_sibling(cursor)) {
            if (!ts_tree_cursor_goto_parent(cursor)) {
                done = true;
                break;
            }
            --depth;
        }
        if (done) {
            break;
        }
    }
    return units;
}

struct SourceFile {
    std::filesystem::path absolute;
    std::string relative;
    Language language;
};

std::vector<SourceFile> list_source_files(const std::filesystem::path& root,
                                          const LanguageSet& languages, Diagnostics* diagnostics) {
    namespace fs = std::filesystem;
    std::vector<SourceFile> files;
    std::error_code ec;
    fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec);
    if (ec) {
        warn(diagnostics, root.string() + ": " + ec.message());
        return files;
    }
    for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) {
            warn(diagnostics, "directory walk: " + ec.message());
            ec.clear();
            continue;
        }
        const auto& entry = *it;
        const auto name = entry.path().filename().string();
        if (entry.is_symlink(ec)) {
            continue;
        }
        if (entry.is_directory(ec)) {
            if (!name.empty() && name.front() == '.') {
                it.disable_recursion_pending();
            }
            continue;
        }
        if (!entry.is_regular_file(ec)) {
            continue;
        }
        auto lang = language_for_extension(entry.path().extension().string());
        if (!lang || !languages.contains(*lang)) {
            continue;
        }
        files.push_back({entry.path(), fs::relative(entry.path(), root, ec).generic_string(), *lang});
    }
    std::sort(files.begin(), files.end(),
              [](const SourceFile& a, const SourceFile& b) { return a.relative < b.relative; });
    return files;
}

std::vector<CodeUnit> extract_one(TSParser* parser, const SourceFile& file, std::string_view repo,
                                  const ExtractOptions& options, Diagnostics* diagnostics) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(file.absolute, ec);
    if (ec) {
        warn(diagnostics, file.relative + ": unreadable (" + ec.message() + "), file skipped");
        return {};
    }
    if (bytes > options.max_file_bytes) {
        warn(diagnostics, file.relative + ": larger than " + std::to_string(options.max_file_bytes) +
                              " bytes, file skipped");
        return {};
    }
    std::string source;
    try {
        source = read_file(file.absolute);
    } catch (const Error& e) {
        warn(diagnostics, file.relative + ": unreadable (" + e.what() + "), file skipped");
        return {};
    }
    if (LineIndex(source).line_count() > options.max_file_lines) {
        warn(diagnostics, file.relative + ": more than " + std::to_string(options.max_file_lines) +
                              " lines, file skipped");
        return {};
    }
    return extract_with_parser(parser, repo, file.relative, file.language, source, diagnostics);
}

} // namespace

std::vector<CodeUnit> extract_file_units(std::string_view repo, std::string_view rel_path,
                                         Language language, std::string_view source,
                                         Diagnostics* diagnostics) {
    ParserPtr parser(ts_parser_new());
    return extract_with_parser(parser.get(), repo, rel_path, language, source, diagnostics);
}

Corpus extract_functions(const std::filesystem::path& repo_root, const LanguageSet& languages,
                         const ExtractOptions& options, Diagnostics* diagnostics) {
    if (!std::filesystem::is_directory(repo_root)) {
        throw Error(ErrorCode::invalid_argument, "repository root is not a directory: " + repo_root.string());
    }
    if (languages.empty()) {
        throw Error(ErrorCode::invalid_argument, "language set must not be empty");
    }
    std::string repo = options.repo;
    if (repo.empty()) {
        repo = std::filesystem::weakly_canonical(repo_root).filename().string();
    }

    const auto files = list_source_files(repo_root, languages, diagnostics);
    std::vector<std::vector<CodeUnit>> per_file(files.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        ParserPtr parser(ts_parser_new());
        for (auto i = next.fetch_add(1); i < files.size(); i = next.fetch_add(1)) {
            per_file[i] = extract_one(parser.get(), files[i], repo, options, diagnostics);
        }
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(files.size())));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(jobs);
        for (unsigned j = 0; j < jobs; ++j) {
            pool.emplace_back(worker);
        }
    }

    std::vector<CodeUnit> units;
    for (auto& batch : per_file) {
        std::move(batch.begin(), batch.end(), std::back_inserter(units));
    }
    return Corpus(std::move(repo), std::move(units));
}

} // namespace locrank
