#!/usr/bin/env python3
"""Generates corpus/backdoor.tasm: a command loop that reads command words
from the input port, dispatches to one of many handlers, mutates a session
key and prints canned replies byte by byte."""

import argparse
import random

REPLIES = [
    "ACK", "NAK", "uploading chunk", "download complete", "shell spawned",
    "keylog flushed", "screenshot taken", "persistence installed",
    "proxy tunnel open", "cleanup done", "sleeping", "beacon sent",
    "credentials dumped", "process hidden", "registry patched",
    "hosts file edited", "firewall rule added", "service restarted",
    "archive staged", "exfil queued", "timer armed", "module loaded",
    "module unloaded", "config reloaded", "peer added", "peer removed",
    "token stolen", "privileges raised", "log wiped", "self test ok",
    "unknown verb", "session closed",
]


def handler(i, rng):
    mul = rng.choice([3, 5, 7, 11, 13, 17, 19, 23, 29, 31]) + 2 * i
    add = rng.randrange(1, 1 << 16)
    mask = rng.randrange(1, 1 << 16)
    lines = [f"fn cmd_{i:02d} {{",
             "  movi r1, session",
             "  load r2, [r1+0]",
             f"  movi r3, {mul}",
             "  mul r2, r3",
             f"  addi r2, {add}",
             f"  movi r4, {mask}",
             "  xor r2, r4"]
    if i % 3 == 0:
        lines += ["  load r5, [r1+4]",
                  "  add r2, r5",
                  "  movi r6, 0",
                  "  cmp r2, r6",
                  "  jge pos",
                  "  subi r2, 1",
                  "pos:"]
    if i % 4 == 1:
        lines += ["  mov r5, r2",
                  "  movi r6, 0xFF",
                  "  and r5, r6",
                  "  store [r1+4], r5"]
    lines += ["  store [r1+0], r2",
              "  out r2",
              f"  movi r1, reply_{i:02d}",
              "  push r1",
              f"  movi r2, {len(REPLIES[i])}",
              "  push r2",
              "  call puts",
              "  pop r1",
              "  pop r1",
              "  movi r0, 0",
              "  ret",
              "}"]
    return lines


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=1337)
    ap.add_argument("-o", "--output", default="corpus/backdoor.tasm")
    args = ap.parse_args()
    rng = random.Random(args.seed)
    n = len(REPLIES)

    out = ["; Command loop: reads up to 24 command words, stopping at 0. Each command",
           "; selects a handler that updates the session key and prints a reply.",
           "; Generated by tools/gen_backdoor.py.",
           "entry main",
           "",
           f'data banner = hex"{"connected to control server v2.1".encode().hex()}"',
           "data session = words 0x5eed, 0, 24"]
    for i, text in enumerate(REPLIES):
        out.append(f'data reply_{i:02d} = hex"{text.encode().hex()}"')
    out += ["",
            "fn main {",
            "  movi r1, banner",
            "  push r1",
            "  movi r2, 32",
            "  push r2",
            "  call puts",
            "  pop r1",
            "  pop r1",
            "loop:",
            "  movi r5, 0xFFFC",
            "  load r2, [r5+0]",
            "  movi r3, 0",
            "  cmp r2, r3",
            "  jz quit",
            f"  movi r3, {n - 1}",
            "  and r2, r3"]
    for i in range(n):
        out += [f"  movi r3, {i}",
                "  cmp r2, r3",
                f"  jz go_{i:02d}"]
    out += ["  jmp quit"]
    for i in range(n):
        out += [f"go_{i:02d}:",
                f"  call cmd_{i:02d}",
                "  jmp next"]
    out += ["next:",
            "  movi r1, session",
            "  load r2, [r1+8]",
            "  subi r2, 1",
            "  store [r1+8], r2",
            "  movi r3, 0",
            "  cmp r2, r3",
            "  jnz loop",
            "quit:",
            "  movi r1, session",
            "  load r2, [r1+0]",
            "  out r2",
            "  halt",
            "}",
            "",
            "; puts(addr, len)",
            "fn puts {",
            "  load r1, [sp+0]",
            "  load r2, [sp+4]",
            "  movi r4, 0",
            "  cmp r1, r4",
            "  jz puts_done",
            "puts_loop:",
            "  load r3, [r2+0]",
            "  movi r5, 0xFF",
            "  and r3, r5",
            "  out r3",
            "  addi r2, 1",
            "  subi r1, 1",
            "  movi r4, 0",
            "  cmp r1, r4",
            "  jnz puts_loop",
            "puts_done:",
            "  movi r0, 0",
            "  ret",
            "}"]
    for i in range(n):
        out.append("")
        out += handler(i, rng)
    with open(args.output, "w") as f:
        f.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
