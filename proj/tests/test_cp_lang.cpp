#include <gtest/gtest.h>

#include "mccsim/cp_lang.hpp"
#include "mccsim/workloads.hpp"

using namespace mccsim;

namespace {

bool has_code(const AssemblyResult& r, DiagCode c) {
  return std::any_of(r.diagnostics.begin(), r.diagnostics.end(), [c](const Diagnostic& d) { return d.code == c; });
}

}  // namespace

TEST(Assembler, HeaderDirectives) {
  const auto r = assemble(R"(
; comment line
.params 3
.events HOSTWRITE|DRAM
.credits 4
.entry main
helper: HALT
main:
    MOV r1, 0x10       # trailing comment
    BR helper
)");
  ASSERT_TRUE(r.ok()) << r.report();
  EXPECT_EQ(r.image->param_count, 3);
  EXPECT_EQ(r.image->declared_events,
            event_bit(CpEventKind::HostLineWrite) | event_bit(CpEventKind::DramCompletion));
  EXPECT_EQ(r.image->stream_credits, 4);
  EXPECT_EQ(r.image->entry_pc, 1u);
  ASSERT_EQ(r.image->code.size(), 3u);
  const auto br = Instruction::decode(r.image->code[2]);
  ASSERT_TRUE(br);
  EXPECT_EQ(br->op, Opcode::BR);
  EXPECT_EQ(br->imm, 0);
}

TEST(Assembler, ImageBytesStartWithMagic) {
  const auto img = assemble_or_throw(".events NONE\n HALT\n");
  const auto bytes = img->serialize();
  ASSERT_EQ(bytes.size(), kImageHeaderBytes + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MCCP");
  EXPECT_EQ(*ChannelProgramImage::parse(bytes).image, *img);
}

TEST(Assembler, Diagnostics) {
  EXPECT_TRUE(has_code(assemble("BR nowhere\n"), DiagCode::UndefinedLabel));
  EXPECT_TRUE(has_code(assemble("a: NOP\na: NOP\n"), DiagCode::DuplicateLabel));
  EXPECT_TRUE(has_code(assemble("FROB r1\n"), DiagCode::UnknownMnemonic));
  EXPECT_TRUE(has_code(assemble("MOV r16, 1\n"), DiagCode::BadOperand));
  EXPECT_TRUE(has_code(assemble(".params 9\nHALT\n"), DiagCode::TooManyParams));
  EXPECT_TRUE(has_code(assemble(".events HOSTREAD\nWAIT HOSTWRITE\n"), DiagCode::EventNotDeclared));
  EXPECT_TRUE(has_code(assemble(".bogus 1\nHALT\n"), DiagCode::BadDirective));

  const auto r = assemble("NOP\nNOP\nADD r1, r2\n");
  ASSERT_FALSE(r.ok());
  ASSERT_FALSE(r.diagnostics.empty());
  EXPECT_EQ(r.diagnostics[0].line, 3u);
  EXPECT_NE(r.report().find("line 3"), std::string::npos);
}

TEST(Assembler, ReportsEveryErrorNotJustTheFirst) {
  const auto r = assemble("BR x\nBR y\nFROB\n");
  EXPECT_GE(r.diagnostics.size(), 3u);
}

TEST(Disassembler, BuiltinProgramsRoundTrip) {
  using namespace workloads::programs;
  for (auto img : {traversal(), gather(), select(), bulk(), access_stats(), busy_loop(), wait_none()}) {
    const std::string text = disassemble(*img);
    const auto again = assemble(text);
    ASSERT_TRUE(again.ok()) << again.report() << text;
    EXPECT_EQ(*again.image, *img);
    EXPECT_EQ(disassemble(*again.image), text);
  }
}

TEST(Disassembler, RandomImagesRoundTrip) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 300; ++i) {
    const auto img = workloads::random_image(rng, {0x1000'0000, 0x7F00'0000});
    const std::string text = disassemble(img);
    const auto again = assemble(text);
    ASSERT_TRUE(again.ok()) << again.report() << text;
    EXPECT_EQ(*again.image, img) << text;
  }
}

TEST(ImageParse, RejectsMalformedHeaders) {
  auto bytes = assemble_or_throw(".events NONE\nHALT\n")->serialize();
  auto parse_err = [](std::vector<std::uint8_t> b) {
    const auto r = ChannelProgramImage::parse(b);
    return r.image ? std::optional<ImageError>{} : std::optional<ImageError>{r.error};
  };
  EXPECT_EQ(parse_err({1, 2, 3}), ImageError::TooShort);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(parse_err(bad), ImageError::BadMagic);
  bad = bytes;
  bad[4] = 9;
  EXPECT_EQ(parse_err(bad), ImageError::BadVersion);
  bad = bytes;
  bad[6] = 5;  // entry beyond one instruction
  EXPECT_EQ(parse_err(bad), ImageError::EntryOutOfRange);
  bad = bytes;
  bad[10] = 9;
  EXPECT_EQ(parse_err(bad), ImageError::TooManyParams);
  bad = bytes;
  bad[12] = 0x80;
  EXPECT_EQ(parse_err(bad), ImageError::UnknownEventBits);
  bad = bytes;
  bad[20] = 1;
  EXPECT_EQ(parse_err(bad), ImageError::ReservedNotZero);
  bad = bytes;
  bad.push_back(0);
  EXPECT_EQ(parse_err(bad), ImageError::LengthMismatch);
}

TEST(Instruction, EncodeDecodeRoundTrip) {
  const Instruction in{Opcode::STA, 3, 7, 0, kFlagImm, -12345};
  const auto back = Instruction::decode(in.encode());
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, in);
  EXPECT_FALSE(Instruction::decode(0xEE));
}

TEST(Safety, WaitNoneIsAnError) {
  const auto rep = check_safety(*assemble_or_throw(".events NONE\nWAIT NONE\nHALT\n"));
  ASSERT_EQ(rep.findings.size(), 1u);
  EXPECT_EQ(rep.findings[0].kind, FindingKind::WaitNeverSatisfied);
  EXPECT_EQ(rep.findings[0].severity, Severity::Error);
  EXPECT_FALSE(rep.ok());
}

TEST(Safety, CompletionWaitWithoutIssueWarns) {
  const auto rep = check_safety(*assemble_or_throw(".events DRAM\nWAIT DRAM\nHALT\n"));
  EXPECT_TRUE(rep.has(FindingKind::CompletionBeforeIssue));
  EXPECT_TRUE(rep.ok()) << "warnings do not block loading";

  const auto fine = check_safety(*assemble_or_throw(
      ".events DRAM\n MOV r1, 0x10000000\n LDA 0, r2, [r1]\n WAITT 0\n HALT\n"));
  EXPECT_TRUE(fine.clean()) << fine.format();
}

TEST(Safety, SpinningStreamLoopWarns) {
  const auto spin = check_safety(*assemble_or_throw(".events NONE\nl: SEND_LINE 0, r1\n BR l\n"));
  EXPECT_TRUE(spin.has(FindingKind::StreamLoopWithoutYield));
  const auto polite = check_safety(*assemble_or_throw(".events NONE\nl: SEND_LINE 0, r1\n YIELD\n BR l\n"));
  EXPECT_FALSE(polite.has(FindingKind::StreamLoopWithoutYield));
}
