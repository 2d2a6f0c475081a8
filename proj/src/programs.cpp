#include "mccsim/workloads.hpp"

namespace mccsim::workloads::programs {

// Scratch layout shared by the graph programs:
//   0x7F000000  RECV_LINE landing ring
//   0x7F001000  visited bitmap
//   0x7F003000  adjacency chunk buffer (256 ids)
//   0x7F003800  BFS queue; queue[0] is the source
const char* const kTraversal = R"(
.params 4
.events HOSTWRITE|DRAM|DMA
    PARAM 0, r13            ; row offsets
    PARAM 1, r14            ; column indices
serve:
    RECV_LINE 32768, r1
    LDA 1, r2, [r1]         ; source
    WAITT 1
    ADD r1, r1, 8
    LDA 1, r3, [r1]         ; hops
    WAITT 1
    MOV r4, 0x7F003800      ; head
    STW 1, [r4], r2
    WAITT 1
    SHR r10, r2, 6
    SHL r10, r10, 3
    ADD r10, r10, 0x7F001000
    AND r1, r2, 63
    MOV r15, 1
    SHL r15, r15, r1
    STA 1, [r10], r15
    WAITT 1
    ADD r5, r4, 4           ; tail
level:
    BEQ r3, r0, done
    SUB r3, r3, 1
    MOV r6, r5              ; end of this level
expand:
    BGE r4, r6, level
    LDW 1, r2, [r4]
    WAITT 1
    ADD r4, r4, 4
    SHL r9, r2, 2
    ADD r9, r9, r13
    LDW 2, r7, [r9]         ; first edge
    ADD r9, r9, 4
    LDW 3, r8, [r9]         ; one past the last edge
    WAITT 2
    WAITT 3
chunk:
    BGE r7, r8, expand
    SUB r9, r8, r7
    MOV r10, 256
    BLT r9, r10, sized
    MOV r9, r10
sized:
    SHL r10, r7, 2
    ADD r10, r10, r14
    ADD r7, r7, r9
    SHL r9, r9, 2
    MOV r11, 0x7F003000
    DMA 4, r11, r10, r9
    WAITT 4
    ADD r9, r9, r11
scan:
    BGE r11, r9, chunk
    LDW 1, r2, [r11]
    WAITT 1
    ADD r11, r11, 4
    SHR r10, r2, 6
    SHL r10, r10, 3
    ADD r10, r10, 0x7F001000
    LDA 1, r12, [r10]
    WAITT 1
    AND r1, r2, 63
    MOV r15, 1
    SHL r15, r15, r1
    AND r1, r12, r15
    BNE r1, r0, scan        ; already visited
    OR r12, r12, r15
    STA 1, [r10], r12
    WAITT 1
    STW 1, [r5], r2
    WAITT 1
    ADD r5, r5, 4
    BR scan
done:
    MOV r1, -1
    STW 1, [r5], r1         ; sentinel
    WAITT 1
    ADD r2, r5, 4
    ADD r6, r5, 64
pad:
    BGE r2, r6, stream
    STW 1, [r2], r0
    WAITT 1
    ADD r2, r2, 4
    BR pad
stream:
    MOV r2, 0x7F003804
    MOV r9, 0
send:
    BLT r5, r2, sent
    AND r10, r9, 15
    SHL r10, r10, 6
    SEND_LINE r10, r2
    ADD r9, r9, 1
    ADD r2, r2, 64
    BR send
sent:
    PARAM 3, r15
    AND r15, r15, 1
    BEQ r15, r0, cleanup
    MOV r2, 0x7F003804
    MOV r9, 0
prefetch:
    BGE r2, r5, cleanup
    LDW 1, r11, [r2]
    WAITT 1
    SHL r11, r11, 2
    ADD r11, r11, r13
    LDW 1, r12, [r11]
    WAITT 1
    SHL r12, r12, 2
    ADD r12, r12, r14
    AND r12, r12, -64
    AND r10, r9, 15
    ADD r10, r10, 16
    SHL r10, r10, 6
    SEND_LINE r10, r12
    ADD r9, r9, 1
    ADD r2, r2, 4
    BR prefetch
cleanup:
    MOV r2, 0x7F003800
clear:
    BGE r2, r5, serve
    LDW 1, r11, [r2]
    WAITT 1
    SHR r11, r11, 6
    SHL r11, r11, 3
    ADD r11, r11, 0x7F001000
    STA 1, [r11], r0
    WAITT 1
    ADD r2, r2, 4
    BR clear
)";

const char* const kGather = R"(
.params 3
.events HOSTWRITE|DRAM|DMA
    PARAM 0, r13            ; attribute array
    PARAM 1, r12            ; record bytes
    PARAM 2, r11            ; host destination
    MOV r10, 1
    SHL r10, r10, 32
    SUB r10, r10, 1         ; 32-bit sentinel
    MOV r2, 0
next:
    RECV_LINE 36864, r1
    ADD r3, r1, 64
ids:
    BGE r1, r3, next
    LDW 1, r4, [r1]
    WAITT 1
    ADD r1, r1, 4
    BEQ r4, r10, finish
    MUL r6, r4, r12
    ADD r6, r6, r13
    MUL r7, r2, r12
    ADD r7, r7, r11
    DMA 2, r7, r6, r12
    WAITT 2
    ADD r2, r2, 1
    BR ids
finish:
    MOV r8, 0x7F00F000
    STA 1, [r8], r2
    WAITT 1
    SEND_LINE 0, r8
    MOV r2, 0
    BR next
)";

const char* const kSelect = R"(
.params 6
.events DRAM|DMA
    PARAM 0, r13            ; table
    PARAM 1, r12            ; rows
    PARAM 2, r11            ; constant
    PARAM 3, r10
    SHL r10, r10, 3         ; column byte offset
    PARAM 4, r9             ; mode
    PARAM 5, r8             ; host destination
    MOV r1, 0               ; row index
    MOV r2, 0               ; lines sent or rows materialized
    MOV r3, 0               ; run start
    MOV r4, 0               ; run length
    MOV r5, 0               ; DMA 3 outstanding
block:
    BGE r1, r12, finish
    SUB r6, r12, r1
    MOV r7, 64
    BLT r6, r7, fetch
    MOV r6, r7
fetch:
    SHL r7, r1, 6
    ADD r7, r7, r13
    SHL r14, r6, 6
    MOV r15, 0x7F001000
    DMA 1, r15, r7, r14
    WAITT 1
    ADD r14, r14, r15
row:
    BGE r15, r14, block
    ADD r7, r15, r10
    LDA 2, r6, [r7]
    WAITT 2
    BGE r6, r11, skip
    BNE r9, r0, keep
    AND r7, r2, 15
    SHL r7, r7, 6
    SEND_LINE r7, r15
    ADD r2, r2, 1
    BR skip
keep:
    BEQ r4, r0, open
    ADD r7, r3, r4
    BEQ r7, r1, extend
    BEQ r5, r0, flush
    WAITT 3
flush:
    SHL r6, r2, 6
    ADD r6, r6, r8
    ADD r2, r2, r4
    SHL r3, r3, 6
    ADD r3, r3, r13
    SHL r4, r4, 6
    DMA 3, r6, r3, r4
    MOV r5, 1
open:
    MOV r3, r1
    MOV r4, 1
    BR skip
extend:
    ADD r4, r4, 1
skip:
    ADD r1, r1, 1
    ADD r15, r15, 64
    BR row
finish:
    MOV r15, 0x7F00F000
    BNE r9, r0, drain
    MOV r6, -1
    STA 2, [r15], r6
    WAITT 2
    AND r7, r2, 15
    SHL r7, r7, 6
    SEND_LINE r7, r15
    HALT
drain:
    BEQ r4, r0, settle
    BEQ r5, r0, last
    WAITT 3
last:
    SHL r6, r2, 6
    ADD r6, r6, r8
    ADD r2, r2, r4
    SHL r3, r3, 6
    ADD r3, r3, r13
    SHL r4, r4, 6
    DMA 3, r6, r3, r4
    MOV r5, 1
settle:
    BEQ r5, r0, report
    WAITT 3
report:
    STA 2, [r15], r2
    WAITT 2
    SEND_LINE 0, r15
    HALT
)";

const char* const kBulk = R"(
.params 4
.events DRAM|DMA
    PARAM 0, r1             ; dst
    PARAM 1, r2             ; src
    PARAM 2, r3             ; length
    PARAM 3, r4             ; 0 zero, 1 copy
    MOV r5, 0x7F000000
    MOV r6, 1
    BEQ r4, r0, zero
    ADD r7, r1, r3
    BGE r2, r7, copy
    ADD r7, r2, r3
    BGE r1, r7, copy
    MOV r6, 2               ; overlapping ranges are rejected
    BR report
copy:
    DMA 1, r1, r2, r3
    WAITT 1
    BR report
zero:
    DMAZ 1, r1, r3
    WAITT 1
report:
    STA 2, [r5], r6
    WAITT 2
    SEND_LINE 0, r5
    HALT
)";

const char* const kAccessStats = R"(
.params 3
.events OBSERVE|HOSTWRITE|DRAM
    PARAM 0, r13            ; region
    PARAM 1, r12            ; pages
    SHL r11, r12, 12
    PARAM 2, r10            ; counters
    STAT_SUB
    MOV r9, 0x7F00F000
    MOV r1, 1
    STA 1, [r9], r1
    WAITT 1
    SEND_LINE 0, r9         ; subscribed
loop:
    WAIT r1, r2, OBSERVE|HOSTWRITE
    MOV r3, 6
    BEQ r1, r3, observe
    RECV_LINE r2, r3
    LDA 1, r4, [r3]         ; k
    WAITT 1
    MOV r7, 8
    BGE r7, r4, capped
    MOV r4, r7
capped:
    BGE r12, r4, sized
    MOV r4, r12
sized:
    MOV r7, 0
wipe:
    MOV r8, 8
    BGE r7, r8, rank
    SHL r14, r7, 3
    ADD r14, r14, r9
    STA 1, [r14], r0
    WAITT 1
    ADD r7, r7, 1
    BR wipe
rank:
    MOV r1, 0
pick:
    BGE r1, r4, unmark
    MOV r5, -1
    MOV r6, 0
    MOV r3, 0
probe:
    BGE r3, r12, chosen
    SHL r14, r3, 3
    ADD r15, r14, 0x7F002000
    LDA 1, r7, [r15]
    WAITT 1
    BNE r7, r0, nextp
    ADD r15, r14, r10
    LDA 1, r8, [r15]
    WAITT 1
    MOV r7, -1
    BEQ r5, r7, take
    BGE r6, r8, nextp
take:
    MOV r5, r3
    MOV r6, r8
nextp:
    ADD r3, r3, 1
    BR probe
chosen:
    SHL r14, r5, 3
    ADD r15, r14, 0x7F002000
    MOV r7, 1
    STA 1, [r15], r7
    WAITT 1
    SHL r7, r6, 32
    OR r7, r7, r5
    SHL r14, r1, 3
    ADD r14, r14, r9
    STA 1, [r14], r7
    WAITT 1
    ADD r1, r1, 1
    BR pick
unmark:
    MOV r3, 0
unmark_next:
    BGE r3, r12, answer
    SHL r14, r3, 3
    ADD r14, r14, 0x7F002000
    STA 1, [r14], r0
    WAITT 1
    ADD r3, r3, 1
    BR unmark_next
answer:
    SEND_LINE 128, r9
    BR loop
observe:
    STAT_NEXT r3
    AND r3, r3, -64
    SUB r3, r3, r13
    BGE r3, r11, loop       ; outside the region
    SHR r3, r3, 12
    SHL r3, r3, 3
    ADD r3, r3, r10
    LDA 1, r4, [r3]
    WAITT 1
    ADD r4, r4, 1
    STA 1, [r3], r4
    WAITT 1
    BR loop
)";

const char* const kBusyLoop = R"(
.events NONE
spin:
    ADD r1, r1, 1
    BR spin
)";

const char* const kWaitNone = R"(
.events NONE
    WAIT NONE
    HALT
)";

namespace {

std::shared_ptr<const ChannelProgramImage> cached(const char* src, std::shared_ptr<const ChannelProgramImage>& slot) {
  if (!slot) slot = assemble_or_throw(src);
  return slot;
}

}  // namespace

std::shared_ptr<const ChannelProgramImage> traversal() {
  static std::shared_ptr<const ChannelProgramImage> img;
  return cached(kTraversal, img);
}
std::shared_ptr<const ChannelProgramImage> gather() {
  static std::shared_ptr<const ChannelProgramImage> img;
  return cached(kGather, img);
}
std::shared_ptr<const ChannelProgramImage> select() {
  static std::shared_ptr<const ChannelProgramImage> img;
  return cached(kSelect, img);
}
std::shared_ptr<const ChannelProgramImage> bulk() {
  static std::shared_ptr<const ChannelProgramImage> img;
  return cached(kBulk, img);
}
std::shared_ptr<const ChannelProgramImage> access_stats() {
  static std::shared_ptr<const ChannelProgramImage> img;
  return cached(kAccessStats, img);
}
std::shared_ptr<const ChannelProgramImage> busy_loop() {
  static std::shared_ptr<const ChannelProgramImage> img;
  return cached(kBusyLoop, img);
}
std::shared_ptr<const ChannelProgramImage> wait_none() {
  static std::shared_ptr<const ChannelProgramImage> img;
  return cached(kWaitNone, img);
}

}  // namespace mccsim::workloads::programs
