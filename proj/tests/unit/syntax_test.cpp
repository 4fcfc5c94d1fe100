#include "unit.hpp"

#include <json.hpp>

using namespace symreview;
using namespace symreview::syntax;

namespace {

std::vector<TokenKind> kinds(std::string_view source) {
  std::vector<TokenKind> out;
  for (const auto& t : tokenize(source)) out.push_back(t.kind);
  return out;
}

std::size_t count_kind(const Node& root, NodeKind kind) {
  std::size_t n = 0;
  walk(root, [&](const Node& node) {
    n += node.kind == kind ? 1 : 0;
    return true;
  });
  return n;
}

// Every child lies within its parent and siblings do not overlap.
void expect_spans_nest(const Node& node) {
  const Span* previous = nullptr;
  for (const auto& c : node.children) {
    EXPECT_TRUE(node.span.contains(c.span)) << "child kind " << static_cast<int>(c.kind) << " at line "
                                            << c.span.begin.line << " escapes parent";
    EXPECT_LE(c.span.begin, c.span.end);
    if (previous && node.kind != NodeKind::Comprehension) {
      EXPECT_LE(previous->end, c.span.begin) << "siblings overlap at line " << c.span.begin.line;
    }
    previous = &c.span;
    expect_spans_nest(c);
  }
}

}  // namespace

TEST(Lexer, IndentationTokens) {
  using K = TokenKind;
  EXPECT_EQ(kinds("if x:\n    y\nz\n"),
            (std::vector<K>{K::Name, K::Name, K::Op, K::Newline, K::Indent, K::Name, K::Newline, K::Dedent, K::Name,
                            K::Newline, K::EndOfFile}));
}

TEST(Lexer, BracketsSuppressNewlines) {
  const auto tokens = tokenize("x = (1,\n     2)\n");
  std::size_t newlines = 0;
  for (const auto& t : tokens) newlines += t.kind == TokenKind::Newline ? 1 : 0;
  EXPECT_EQ(newlines, 1u);
}

TEST(Lexer, StringsAndComments) {
  const auto tokens = tokenize("s = rb'a\\'b'  # note\nt = \"\"\"multi\nline\"\"\"\n");
  ASSERT_GE(tokens.size(), 7u);
  EXPECT_EQ(tokens[2].kind, TokenKind::String);
  EXPECT_EQ(tokens[2].text, "rb'a\\'b'");
  EXPECT_EQ(tokens[6].kind, TokenKind::String);
  EXPECT_EQ(tokens[6].span.begin.line, 2u);
  EXPECT_EQ(tokens[6].span.end.line, 3u);
}

TEST(Lexer, UnterminatedStringIsErrorToken) {
  bool saw_error = false;
  for (const auto& t : tokenize("x = 'abc\n")) saw_error |= t.kind == TokenKind::Error;
  EXPECT_TRUE(saw_error);
}

TEST(Parser, BuildsStatementKinds) {
  const auto tree = parse(R"(import os
from sys import path as p

@decorator
async def fetch(url, *args, timeout=3, **kw) -> str:
    async with session(url) as resp:
        return await resp.text()

class Box(Base):
    size: int = 0

    def grow(self, step):
        self.size += step
        del step
        global total
        assert self.size > 0, "negative"
        return [x for x in range(step) if x]

for key, value in items.items():
    if key:
        continue
    elif value:
        break
    else:
        pass
while False:
    raise ValueError("x") from None
try:
    run()
except (OSError, ValueError) as err:
    lambda q=1: q
finally:
    cleanup()
)",
                          syntax::ParseMode::Strict);
  EXPECT_TRUE(tree.opaque_regions.empty());
  const Node& root = tree.root;
  EXPECT_EQ(count_kind(root, NodeKind::FunctionDef), 2u);
  EXPECT_EQ(count_kind(root, NodeKind::ClassDef), 1u);
  EXPECT_EQ(count_kind(root, NodeKind::Import), 2u);
  EXPECT_EQ(count_kind(root, NodeKind::AnnAssign), 1u);
  EXPECT_EQ(count_kind(root, NodeKind::AugAssign), 1u);
  EXPECT_EQ(count_kind(root, NodeKind::Comprehension), 1u);
  EXPECT_EQ(count_kind(root, NodeKind::Lambda), 1u);
  EXPECT_EQ(count_kind(root, NodeKind::ExceptHandler), 1u);
  EXPECT_EQ(count_kind(root, NodeKind::Await), 1u);
  EXPECT_EQ(count_kind(root, NodeKind::Decorator), 1u);

  const Node& fetch = root.children[2];
  ASSERT_EQ(fetch.kind, NodeKind::FunctionDef);
  EXPECT_TRUE(fetch.is_async);
  EXPECT_EQ(fetch.text, "fetch");
  const auto params = fetch.children_with(Role::Parameter);
  ASSERT_EQ(params.size(), 4u);
  EXPECT_EQ(params[1]->parameter, ParameterKind::VarArgs);
  EXPECT_TRUE(params[2]->has_default());
  EXPECT_EQ(params[3]->parameter, ParameterKind::KwArgs);
  EXPECT_EQ(fetch.span.begin.line, 4u);

  const Node* handler = nullptr;
  walk(root, [&](const Node& n) {
    if (n.kind == NodeKind::ExceptHandler) handler = &n;
    return true;
  });
  ASSERT_NE(handler, nullptr);
  EXPECT_EQ(handler->text, "err");
  EXPECT_EQ(handler->child(Role::Type)->kind, NodeKind::Tuple);
}

TEST(Parser, TolerantModeRecoversFromBadStatements) {
  const std::string source = "def ok():\n    return 1\n\nx = = 2\n\ndef also_ok(a):\n    return a\n";
  const auto tree = parse(source);
  ASSERT_EQ(tree.opaque_regions.size(), 1u);
  EXPECT_EQ(tree.opaque_regions[0].begin.line, 4u);
  EXPECT_EQ(count_kind(tree.root, NodeKind::FunctionDef), 2u);
  EXPECT_ERROR_KIND(parse(source, syntax::ParseMode::Strict), ErrorKind::Parse);
}

TEST(Parser, StrictErrorCarriesLine) {
  try {
    parse("a = 1\nb = (\n", syntax::ParseMode::Strict);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GE(e.line(), 2u);
  }
}

TEST(Parser, BinaryInputAlwaysFails) {
  const std::string binary("\x7f" "ELF\x02\x01\x01\x00\x00\x00", 10);
  EXPECT_ERROR_KIND(parse(binary), ErrorKind::Parse);
  EXPECT_ERROR_KIND(parse("x = '\xff\xfe'\n"), ErrorKind::Parse);
}

TEST(Parser, EmptyAndCommentOnlySources) {
  EXPECT_TRUE(parse("").root.children.empty());
  EXPECT_TRUE(parse("# nothing\n\n   \n").root.children.empty());
}

TEST(Parser, SpansNestOnFixtureCorpus) {
  const auto cases = nlohmann::json::parse(support::slurp(support::fixture("detectors.json")));
  for (const auto& c : cases) {
    SCOPED_TRACE(c["name"].get<std::string>());
    expect_spans_nest(parse(c["source"].get<std::string>()).root);
  }
  for (const auto& s : load_dataset(support::data_file("mini.jsonl"))) {
    SCOPED_TRACE(s.id);
    expect_spans_nest(parse(s.source).root);
  }
}

TEST(Parser, SpansNestOnMutatedSources) {
  // Truncating real sources at every line boundary exercises recovery paths.
  for (const auto& s : load_dataset(support::data_file("mini.jsonl"))) {
    for (std::size_t cut = s.source.find('\n'); cut != std::string::npos; cut = s.source.find('\n', cut + 1)) {
      SCOPED_TRACE(s.id);
      const auto tree = parse(s.source.substr(0, cut / 2 + 1));
      expect_spans_nest(tree.root);
    }
  }
}
