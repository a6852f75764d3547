//! Loss tapes: in-memory storage with exact realized bounds, the CSV
//! interchange format, and the replay / adversarial oracles.
//!
//! CSV layout: header `t,p1,...,pn`, then one `t,loss_1,...,loss_n` row per
//! step with `t` counting from 0. UTF-8, LF line endings. Values are written
//! with Rust's shortest round-trip float formatting, so a written tape reads
//! back bit-for-bit.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::engine::{LossOracle, LossVector};
use crate::error::{Error, Result};
use crate::simplex::Portfolio;
use crate::variants::LossBounds;

/// A finite loss history plus its exact realized bounds
/// `mu = max(0, -min entry)`, `rho = max(0, max entry)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    n: usize,
    data: Vec<f64>,
    mu: f64,
    rho: f64,
}

impl Tape {
    /// Wraps row-major loss data. Entries must be finite and form whole
    /// rows; realized bounds are computed in a single extra pass.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::input(format!("tape needs at least 2 products, got {n}")));
        }
        if data.is_empty() {
            return Err(Error::input("empty tape"));
        }
        if data.len() % n != 0 {
            return Err(Error::input(format!(
                "tape data length {} is not a multiple of n = {n}",
                data.len()
            )));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &data {
            if !v.is_finite() {
                return Err(Error::input(format!("tape contains non-finite loss {v}")));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok(Self {
            n,
            data,
            mu: (-lo).max(0.0),
            rho: hi.max(0.0),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of steps on the tape.
    pub fn steps(&self) -> u64 {
        (self.data.len() / self.n) as u64
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n..(t + 1) * self.n]
    }

    /// Largest realized gain magnitude.
    pub fn realized_mu(&self) -> f64 {
        self.mu
    }

    /// Largest realized loss.
    pub fn realized_rho(&self) -> f64 {
        self.rho
    }

    /// Realized bounds as a [`LossBounds`]; fails for the degenerate
    /// all-zero tape, which no parameter formula can consume.
    pub fn bounds(&self) -> Result<LossBounds> {
        LossBounds::new(self.mu, self.rho)
    }

    pub fn oracle(&self) -> TapeOracle<'_> {
        TapeOracle { tape: self, cursor: 0 }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 1..=self.n {
            write!(w, ",p{i}")?;
        }
        writeln!(w)?;
        for t in 0..self.steps() as usize {
            write!(w, "{t}")?;
            for &v in self.row(t) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::input("empty tape"))?;
        let header = header?;
        let fields: Vec<&str> = header.trim_end().split(',').collect();
        if fields.first() != Some(&"t") || fields.len() < 3 {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header 't,p1,...,pn', got '{header}'"),
            });
        }
        for (i, f) in fields[1..].iter().enumerate() {
            if *f != format!("p{}", i + 1) {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected column 'p{}', got '{f}'", i + 1),
                });
            }
        }
        let n = fields.len() - 1;

        let mut data = Vec::new();
        let mut expected_t = 0u64;
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.trim_end().split(',').collect();
            if cells.len() != n + 1 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {} cells, got {}", n + 1, cells.len()),
                });
            }
            let t: u64 = cells[0].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad step index '{}'", cells[0]),
            })?;
            if t != expected_t {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("step index {t} out of order, expected {expected_t}"),
                });
            }
            expected_t += 1;
            for cell in &cells[1..] {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("non-numeric cell '{cell}'"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("non-finite loss '{cell}'"),
                    });
                }
                data.push(v);
            }
        }
        if data.is_empty() {
            return Err(Error::input("empty tape"));
        }
        Self::new(n, data)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Replays a borrowed tape row by row.
#[derive(Debug, Clone)]
pub struct TapeOracle<'a> {
    tape: &'a Tape,
    cursor: u64,
}

impl LossOracle for TapeOracle<'_> {
    fn next_loss(&mut self, _x: &Portfolio) -> Option<LossVector> {
        if self.cursor >= self.tape.steps() {
            return None;
        }
        let row = self.tape.row(self.cursor as usize).to_vec();
        self.cursor += 1;
        Some(LossVector::new(row))
    }
}

/// Loads a CSV tape from disk and replays it; realized bounds come with the
/// tape.
#[derive(Debug, Clone)]
pub struct ReplayOracle {
    tape: Tape,
    cursor: u64,
}

impl ReplayOracle {
    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(Self {
            tape: Tape::read_csv_path(path)?,
            cursor: 0,
        })
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// Steps remaining to be replayed.
    pub fn len(&self) -> u64 {
        self.tape.steps() - self.cursor
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LossOracle for ReplayOracle {
    fn next_loss(&mut self, _x: &Portfolio) -> Option<LossVector> {
        if self.cursor >= self.tape.steps() {
            return None;
        }
        let row = self.tape.row(self.cursor as usize).to_vec();
        self.cursor += 1;
        Some(LossVector::new(row))
    }
}

/// Greedy adversary: assigns the worst admissible loss `rho` to the product
/// the algorithm trusts most (ties to the lowest index) and the best
/// admissible loss `-mu` to every other product.
#[derive(Debug, Clone, Copy)]
pub struct AdversarialOracle {
    bounds: LossBounds,
}

impl AdversarialOracle {
    pub fn new(bounds: LossBounds) -> Self {
        Self { bounds }
    }
}

impl LossOracle for AdversarialOracle {
    fn next_loss(&mut self, x: &Portfolio) -> Option<LossVector> {
        let mut loss = vec![-self.bounds.mu(); x.dim()];
        loss[x.argmax()] = self.bounds.rho();
        Some(LossVector::new(loss))
    }
}
