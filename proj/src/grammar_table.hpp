#pragma once

// Per-language node kinds that define a "function" and the scopes that
// contribute to its qualified name.

#include "locrank/language.hpp"

#include <string_view>
#include <vector>

extern "C" {
#include <tree_sitter/api.h>

const TSLanguage* tree_sitter_python(void);
const TSLanguage* tree_sitter_javascript(void);
const TSLanguage* tree_sitter_typescript(void);
const TSLanguage* tree_sitter_java(void);
const TSLanguage* tree_sitter_ruby(void);
const TSLanguage* tree_sitter_rust(void);
const TSLanguage* tree_sitter_go(void);
const TSLanguage* tree_sitter_php(void);
const TSLanguage* tree_sitter_c(void);
const TSLanguage* tree_sitter_cpp(void);
}

namespace locrank::detail {

struct KindList {
    std::vector<std::string_view> kinds;

    bool contains(std::string_view kind) const noexcept {
        for (auto k : kinds) {
            if (k == kind) {
                return true;
            }
        }
        return false;
    }
};

struct GrammarSpec {
    Language language;
    const TSLanguage* (*grammar)();
    // Named definitions: functions, methods, constructors.
    KindList functions;
    // Function literals; named from their binding when there is one, else "<anon@line>".
    KindList anonymous;
    // Class/module/namespace-like containers.
    KindList scopes;
};

inline const GrammarSpec& grammar_spec(Language lang) {
    static const GrammarSpec specs[] = {
        {Language::python, tree_sitter_python,
         {{"function_definition"}},
         {{}},
         {{"class_definition"}}},
        {Language::javascript, tree_sitter_javascript,
         {{"function_declaration", "generator_function_declaration", "method_definition"}},
         {{"function_expression", "generator_function", "arrow_function"}},
         {{"class_declaration", "class"}}},
        {Language::typescript, tree_sitter_typescript,
         {{"function_declaration", "generator_function_declaration", "method_definition"}},
         {{"function_expression", "generator_function", "arrow_function"}},
         {{"class_declaration", "abstract_class_declaration", "class", "interface_declaration",
           "internal_module", "module"}}},
        {Language::java, tree_sitter_java,
         {{"method_declaration", "constructor_declaration", "compact_constructor_declaration"}},
         {{}},
         {{"class_declaration", "interface_declaration", "enum_declaration", "record_declaration",
           "annotation_type_declaration", "object_creation_expression"}}},
        {Language::ruby, tree_sitter_ruby,
         {{"method", "singleton_method"}},
         {{}},
         {{"class", "module", "singleton_class"}}},
        {Language::rust, tree_sitter_rust,
         {{"function_item"}},
         {{}},
         {{"impl_item", "trait_item", "mod_item"}}},
        {Language::go, tree_sitter_go,
         {{"function_declaration", "method_declaration"}},
         {{"func_literal"}},
         {{}}},
        {Language::php, tree_sitter_php,
         {{"function_definition", "method_declaration"}},
         {{"anonymous_function", "arrow_function"}},
         {{"class_declaration", "interface_declaration", "trait_declaration", "enum_declaration",
           "namespace_definition"}}},
        {Language::c, tree_sitter_c,
         {{"function_definition"}},
         {{}},
         {{}}},
        {Language::cpp, tree_sitter_cpp,
         {{"function_definition"}},
         {{}},
         {{"class_specifier", "struct_specifier", "union_specifier", "namespace_definition"}}},
    };
    for (const auto& spec : specs) {
        if (spec.language == lang) {
            return spec;
        }
    }
    return specs[0];
}

} // namespace locrank::detail
