//! One builder per mutual exclusion algorithm.
//!
//! Every thread loops forever: `noncrit`, entry protocol, `crit`, exit
//! protocol. Each register access is its own read or write statement;
//! awaits re-read their registers on every evaluation and conditions over
//! several registers read them left to right, stopping as soon as the
//! outcome is known.

use super::program::{and, eq, lt, ne, not, or, sub, Builder, Event, Expr, LocalId, Program};
use super::{AlgorithmError, Bit, LamportVariant};

fn c(v: i32) -> Expr {
    Expr::c(v)
}

fn l(local: LocalId) -> Expr {
    Expr::l(local)
}

fn require_at_least_two(name: &str, threads: u8) -> Result<(), AlgorithmError> {
    if (2..=crate::action::MAX_THREADS as u8).contains(&threads) {
        Ok(())
    } else {
        Err(AlgorithmError::UnsupportedThreads {
            algorithm: name.to_string(),
            threads,
        })
    }
}

/// Peterson's two-thread algorithm.
pub fn peterson() -> Result<Program, AlgorithmError> {
    let mut b = Builder::new("peterson", 2);
    let flag = b.array("flag", 2, 2, true);
    let turn = b.array("turn", 1, 2, false);
    let t = b.local("t");
    for i in 0..2 {
        let j = 1 - i;
        b.begin_thread();
        let top = b.here();
        b.emit(Event::NonCrit);
        b.write(flag, c(i), c(1));
        b.write(turn, c(0), c(i));
        let wait = b.here();
        let cs = b.label();
        b.read(flag, c(j), t);
        b.branch(eq(l(t), c(0)), cs);
        b.read(turn, c(0), t);
        b.branch(eq(l(t), c(j)), cs);
        b.goto(wait);
        b.mark(cs);
        b.emit(Event::Crit);
        b.write(flag, c(i), c(0));
        b.goto(top);
    }
    b.finish()
}

/// Emits `await flag[j] = 0 ∨ turn = j`, continuing at `done`.
fn await_flag_or_turn(b: &mut Builder, flag: usize, turn: usize, t: LocalId, j: i32, done: super::program::Label) {
    let wait = b.here();
    b.read(flag, c(j), t);
    b.branch(eq(l(t), c(0)), done);
    b.read(turn, c(0), t);
    b.branch(eq(l(t), c(j)), done);
    b.goto(wait);
}

/// Emits `await flag[j] = 0`, continuing at `done`.
fn await_flag_zero(b: &mut Builder, flag: usize, t: LocalId, j: i32, done: super::program::Label) {
    let wait = b.here();
    b.read(flag, c(j), t);
    b.branch(eq(l(t), c(0)), done);
    b.goto(wait);
}

/// The two-thread algorithm whose line-4 test on `turn` reads the register
/// once and decides both branches from that value.
pub fn attiya_welch_original() -> Result<Program, AlgorithmError> {
    let mut b = Builder::new("attiya-welch", 2);
    let flag = b.array("flag", 2, 2, true);
    let turn = b.array("turn", 1, 2, false);
    let t = b.local("t");
    for i in 0..2 {
        let j = 1 - i;
        b.begin_thread();
        let top = b.here();
        b.emit(Event::NonCrit);
        let entry = b.here();
        b.write(flag, c(i), c(0));
        let raise = b.label();
        await_flag_or_turn(&mut b, flag, turn, t, j, raise);
        b.mark(raise);
        b.write(flag, c(i), c(1));
        let cs = b.label();
        let other = b.label();
        b.read(turn, c(0), t);
        b.branch(ne(l(t), c(i)), other);
        b.read(flag, c(j), t);
        b.branch(eq(l(t), c(1)), entry);
        b.goto(cs);
        b.mark(other);
        await_flag_zero(&mut b, flag, t, j, cs);
        b.mark(cs);
        b.emit(Event::Crit);
        b.write(turn, c(0), c(i));
        b.write(flag, c(i), c(0));
        b.goto(top);
    }
    b.finish()
}

/// The repeat-until formulation, which reads `turn` separately in its
/// `until` condition and in the following `if`.
pub fn attiya_welch_alternate() -> Result<Program, AlgorithmError> {
    let mut b = Builder::new("attiya-welch-alt", 2);
    let flag = b.array("flag", 2, 2, true);
    let turn = b.array("turn", 1, 2, false);
    let t = b.local("t");
    for i in 0..2 {
        let j = 1 - i;
        b.begin_thread();
        let top = b.here();
        b.emit(Event::NonCrit);
        let repeat = b.here();
        b.write(flag, c(i), c(0));
        let raise = b.label();
        await_flag_or_turn(&mut b, flag, turn, t, j, raise);
        b.mark(raise);
        b.write(flag, c(i), c(1));
        let after = b.label();
        b.read(turn, c(0), t);
        b.branch(eq(l(t), c(j)), after);
        b.read(flag, c(j), t);
        b.branch(eq(l(t), c(0)), after);
        b.goto(repeat);
        b.mark(after);
        let cs = b.label();
        b.read(turn, c(0), t);
        b.branch(ne(l(t), c(j)), cs);
        await_flag_zero(&mut b, flag, t, j, cs);
        b.mark(cs);
        b.emit(Event::Crit);
        b.write(turn, c(0), c(i));
        b.write(flag, c(i), c(0));
        b.goto(top);
    }
    b.finish()
}

/// Szymanski's flag algorithm with one five-valued flag per thread.
/// Quantified conditions range over the other threads in ascending order;
/// an await that fails re-evaluates from the first thread.
pub fn szymanski_flag(threads: u8) -> Result<Program, AlgorithmError> {
    require_at_least_two("szymanski-flag", threads)?;
    let n = threads as i32;
    let mut b = Builder::new("szymanski-flag", threads);
    let flag = b.array("flag", threads as usize, 5, true);
    let t = b.local("t");
    for i in 0..n {
        let others: Vec<i32> = (0..n).filter(|&j| j != i).collect();
        b.begin_thread();
        let top = b.here();
        b.emit(Event::NonCrit);
        b.write(flag, c(i), c(1));
        // await ∀j. flag[j] < 3
        let wait_open = b.here();
        for &j in &others {
            b.read(flag, c(j), t);
            b.branch(not(lt(l(t), c(3))), wait_open);
        }
        b.write(flag, c(i), c(3));
        // if ∃j. flag[j] = 1
        let wait_room = b.label();
        let in_room = b.label();
        for &j in &others {
            b.read(flag, c(j), t);
            b.branch(eq(l(t), c(1)), wait_room);
        }
        b.goto(in_room);
        b.mark(wait_room);
        b.write(flag, c(i), c(2));
        // await ∃j. flag[j] = 4
        let scan = b.here();
        for &j in &others {
            b.read(flag, c(j), t);
            b.branch(eq(l(t), c(4)), in_room);
        }
        b.goto(scan);
        b.mark(in_room);
        b.write(flag, c(i), c(4));
        // await ∀j < i. flag[j] < 2
        let wait_lower = b.here();
        for j in 0..i {
            b.read(flag, c(j), t);
            b.branch(not(lt(l(t), c(2))), wait_lower);
        }
        b.emit(Event::Crit);
        // await ∀j > i. flag[j] < 2 ∨ flag[j] > 3
        let wait_upper = b.here();
        for j in i + 1..n {
            b.read(flag, c(j), t);
            b.branch(and(not(lt(l(t), c(2))), not(lt(c(3), l(t)))), wait_upper);
        }
        b.write(flag, c(i), c(0));
        b.goto(top);
    }
    b.finish()
}

/// Szymanski's flag algorithm with each flag split into the bits `intent`,
/// `door_in` and `door_out`; the exit protocol clears them in
/// `reset_order`.
pub fn szymanski_flag_bits(threads: u8, reset_order: [Bit; 3]) -> Result<Program, AlgorithmError> {
    require_at_least_two("szymanski-bits", threads)?;
    let mut sorted = reset_order;
    sorted.sort();
    if sorted != [Bit::Intent, Bit::DoorIn, Bit::DoorOut] {
        return Err(AlgorithmError::Invalid("the reset order must name each bit once".into()));
    }
    let n = threads as i32;
    let mut b = Builder::new("szymanski-bits", threads);
    let intent = b.array("intent", threads as usize, 2, true);
    let door_in = b.array("door_in", threads as usize, 2, true);
    let door_out = b.array("door_out", threads as usize, 2, true);
    let array_of = |bit: Bit| match bit {
        Bit::Intent => intent,
        Bit::DoorIn => door_in,
        Bit::DoorOut => door_out,
    };
    let t = b.local("t");
    for i in 0..n {
        let others: Vec<i32> = (0..n).filter(|&j| j != i).collect();
        b.begin_thread();
        let top = b.here();
        b.emit(Event::NonCrit);
        b.write(intent, c(i), c(1));
        // await ∀j. intent[j] = 0 ∨ door_in[j] = 0
        let wait_open = b.here();
        for &j in &others {
            let ok = b.label();
            b.read(intent, c(j), t);
            b.branch(eq(l(t), c(0)), ok);
            b.read(door_in, c(j), t);
            b.branch(ne(l(t), c(0)), wait_open);
            b.mark(ok);
        }
        b.write(door_in, c(i), c(1));
        // if ∃j. intent[j] = 1 ∧ door_in[j] = 0
        let wait_room = b.label();
        let check_own = b.label();
        for &j in &others {
            let next = b.label();
            b.read(intent, c(j), t);
            b.branch(ne(l(t), c(1)), next);
            b.read(door_in, c(j), t);
            b.branch(eq(l(t), c(0)), wait_room);
            b.mark(next);
        }
        b.goto(check_own);
        b.mark(wait_room);
        b.write(intent, c(i), c(0));
        // await ∃j. door_out[j] = 1
        let scan = b.here();
        for &j in &others {
            b.read(door_out, c(j), t);
            b.branch(eq(l(t), c(1)), check_own);
        }
        b.goto(scan);
        b.mark(check_own);
        // if intent[i] = 0 then intent[i] ← 1
        let open_out = b.label();
        b.read(intent, c(i), t);
        b.branch(ne(l(t), c(0)), open_out);
        b.write(intent, c(i), c(1));
        b.mark(open_out);
        b.write(door_out, c(i), c(1));
        // await ∀j < i. door_in[j] = 0
        let wait_lower = b.here();
        for j in 0..i {
            b.read(door_in, c(j), t);
            b.branch(ne(l(t), c(0)), wait_lower);
        }
        b.emit(Event::Crit);
        // await ∀j > i. door_in[j] = 0 ∨ door_out[j] = 1
        let wait_upper = b.here();
        for j in i + 1..n {
            let ok = b.label();
            b.read(door_in, c(j), t);
            b.branch(eq(l(t), c(0)), ok);
            b.read(door_out, c(j), t);
            b.branch(ne(l(t), c(1)), wait_upper);
            b.mark(ok);
        }
        for bit in reset_order {
            b.write(array_of(bit), c(i), c(0));
        }
        b.goto(top);
    }
    b.finish()
}

/// Szymanski's three-bit linear wait algorithm over registers `a`, `w`
/// and `s`. With `semaphore`, every write to `w` or `s` and each paired
/// read of `w[j]`, `s[j]` in the line-18 scan run under a global lock.
pub fn szymanski_3bit(threads: u8, semaphore: bool) -> Result<Program, AlgorithmError> {
    require_at_least_two("szymanski-3bit", threads)?;
    let n = threads as i32;
    let mut b = Builder::new("szymanski-3bit", threads);
    let a = b.array("a", threads as usize, 2, true);
    let w = b.array("w", threads as usize, 2, true);
    let s = b.array("s", threads as usize, 2, true);
    let t = b.local("t");
    let u = b.local("u");
    let j = b.local("j");
    let locked_write = |b: &mut Builder, array: usize, i: i32, v: i32| {
        if semaphore {
            b.acquire();
        }
        b.write(array, c(i), c(v));
        if semaphore {
            b.release();
        }
    };
    // for j ← 0 to bound - 1: await array[j] = 0
    let await_all_zero = |b: &mut Builder, array: usize, bound: i32| {
        b.assign(j, c(0));
        let head = b.here();
        let done = b.label();
        b.branch(not(lt(l(j), c(bound))), done);
        let spin = b.here();
        b.read(array, l(j), t);
        b.branch(ne(l(t), c(0)), spin);
        b.assign(j, super::program::add(l(j), c(1)));
        b.goto(head);
        b.mark(done);
    };
    // j ← 0; while j < N ∧ a[j] = 0: j ← j + 1
    let scan_a = |b: &mut Builder| {
        b.assign(j, c(0));
        let head = b.here();
        let done = b.label();
        b.branch(not(lt(l(j), c(n))), done);
        b.read(a, l(j), t);
        b.branch(ne(l(t), c(0)), done);
        b.assign(j, super::program::add(l(j), c(1)));
        b.goto(head);
        b.mark(done);
    };
    for i in 0..n {
        b.begin_thread();
        let top = b.here();
        b.emit(Event::NonCrit);
        b.write(a, c(i), c(1));
        await_all_zero(&mut b, s, n);
        locked_write(&mut b, w, i, 1);
        b.write(a, c(i), c(0));
        let while_head = b.here();
        let exit_loop = b.label();
        b.read(s, c(i), t);
        b.branch(ne(l(t), c(0)), exit_loop);
        scan_a(&mut b);
        let line16 = b.label();
        b.branch(ne(l(j), c(n)), line16);
        locked_write(&mut b, s, i, 1);
        scan_a(&mut b);
        let line14 = b.label();
        b.branch(not(lt(l(j), c(n))), line14);
        locked_write(&mut b, s, i, 0);
        b.goto(line16);
        b.mark(line14);
        locked_write(&mut b, w, i, 0);
        await_all_zero(&mut b, w, n);
        b.mark(line16);
        let line19 = b.label();
        b.branch(not(lt(l(j), c(n))), line19);
        // j ← 0; while j < N ∧ (w[j] = 1 ∨ s[j] = 0): j ← j + 1
        b.assign(j, c(0));
        let head = b.here();
        let advance = b.label();
        b.branch(not(lt(l(j), c(n))), line19);
        if semaphore {
            b.acquire();
        }
        let found = b.label();
        b.read(w, l(j), t);
        b.branch(eq(l(t), c(1)), advance);
        b.read(s, l(j), u);
        b.branch(eq(l(u), c(0)), advance);
        b.goto(found);
        b.mark(advance);
        if semaphore {
            b.release();
        }
        b.assign(j, super::program::add(l(j), c(1)));
        b.goto(head);
        b.mark(found);
        if semaphore {
            b.release();
        }
        b.mark(line19);
        b.branch(not(and(ne(l(j), c(i)), lt(l(j), c(n)))), while_head);
        locked_write(&mut b, s, i, 1);
        locked_write(&mut b, w, i, 0);
        b.goto(while_head);
        b.mark(exit_loop);
        await_all_zero(&mut b, s, i);
        b.emit(Event::Crit);
        locked_write(&mut b, s, i, 0);
        b.goto(top);
    }
    b.finish()
}

/// Lamport's three-bit algorithm over registers `x`, `y` and `z`. The
/// variant decides how `f ← minimum{j ∈ γ | CG(z, γ, j)}` reads `z`.
pub fn lamport_3bit(threads: u8, variant: LamportVariant) -> Result<Program, AlgorithmError> {
    require_at_least_two("lamport-3bit", threads)?;
    let n = threads as i32;
    let mut b = Builder::new("lamport-3bit", threads);
    let x = b.array("x", threads as usize, 2, true);
    let y = b.array("y", threads as usize, 2, true);
    let z = b.array("z", threads as usize, 2, true);
    let t = b.local("t");
    let u = b.local("u");
    let j = b.local("j");
    let f = b.local("f");
    let gamma = b.local("gamma");
    let zs = b.local("zs");
    let set_bit = |mask: LocalId, index: Expr, bit: Expr| Expr::SetBit {
        mask: Box::new(l(mask)),
        index: Box::new(index),
        bit: Box::new(bit),
    };
    let next_in_gamma = |elem: Expr| Expr::CycleNext {
        mask: Box::new(l(gamma)),
        elem: Box::new(elem),
    };
    for i in 0..n {
        b.begin_thread();
        let top = b.here();
        b.emit(Event::NonCrit);
        b.write(y, c(i), c(1));
        let line1 = b.here();
        b.write(x, c(i), c(1));
        let line2 = b.here();
        // γ ← ORD{j | y_j = 1}
        b.assign(gamma, c(0));
        for k in 0..n {
            b.read(y, c(k), t);
            b.assign(gamma, set_bit(gamma, c(k), l(t)));
        }
        let have_f = b.label();
        match variant {
            LamportVariant::Snapshot => {
                b.assign(zs, c(0));
                for k in 0..n {
                    let skip = b.label();
                    b.branch(
                        not(Expr::TestBit {
                            mask: Box::new(l(gamma)),
                            index: Box::new(c(k)),
                        }),
                        skip,
                    );
                    b.read(z, c(k), t);
                    b.assign(zs, set_bit(zs, c(k), l(t)));
                    b.mark(skip);
                }
                b.assign(
                    f,
                    Expr::CgMin {
                        bits: Box::new(l(zs)),
                        cycle: Box::new(l(gamma)),
                    },
                );
                b.branch(ne(l(f), c(super::program::NONE)), have_f);
                b.stop();
            }
            LamportVariant::ReRead => {
                // j runs over γ in order; each CG test reads z_j and the
                // z-value it is compared against
                b.assign(j, Expr::Min(Box::new(l(gamma))));
                let test = b.here();
                b.read(z, l(j), t);
                b.read(
                    z,
                    Expr::CyclePrev {
                        mask: Box::new(l(gamma)),
                        elem: Box::new(l(j)),
                    },
                    u,
                );
                let first = eq(l(j), Expr::Min(Box::new(l(gamma))));
                let holds = or(and(first.clone(), eq(l(t), l(u))), and(not(first), ne(l(t), l(u))));
                let found = b.label();
                b.branch(holds, found);
                let last = eq(next_in_gamma(l(j)), Expr::Min(Box::new(l(gamma))));
                let none = b.label();
                b.branch(last, none);
                b.assign(j, next_in_gamma(l(j)));
                b.goto(test);
                b.mark(none);
                b.stop();
                b.mark(found);
                b.assign(f, l(j));
                b.goto(have_f);
            }
        }
        b.mark(have_f);
        // for j ← f cyclically to i: if y_j = 1 then (if x_i = 1 then x_i ← 0); goto line 2
        b.assign(j, l(f));
        let loop1 = b.here();
        let after1 = b.label();
        b.branch(eq(l(j), c(i)), after1);
        let next1 = b.label();
        b.read(y, l(j), t);
        b.branch(ne(l(t), c(1)), next1);
        b.read(x, c(i), t);
        b.branch(ne(l(t), c(1)), line2);
        b.write(x, c(i), c(0));
        b.goto(line2);
        b.mark(next1);
        b.assign(j, next_in_gamma(l(j)));
        b.goto(loop1);
        b.mark(after1);
        // if x_i = 0 then goto line 1
        b.read(x, c(i), t);
        b.branch(eq(l(t), c(0)), line1);
        // for j ← i ⊕ 1 cyclically to f: if x_j = 1 then goto line 2
        b.assign(j, next_in_gamma(c(i)));
        let loop2 = b.here();
        let cs = b.label();
        b.branch(eq(l(j), l(f)), cs);
        b.read(x, l(j), t);
        b.branch(eq(l(t), c(1)), line2);
        b.assign(j, next_in_gamma(l(j)));
        b.goto(loop2);
        b.mark(cs);
        b.emit(Event::Crit);
        b.read(z, c(i), t);
        b.write(z, c(i), sub(c(1), l(t)));
        b.write(x, c(i), c(0));
        b.write(y, c(i), c(0));
        b.goto(top);
    }
    b.finish()
}
