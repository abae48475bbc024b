use thiserror::Error;

use crate::Point;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("point ({}, {}) lies inside an obstacle", .0.re, .0.im)]
    InsideObstacle(Point),

    #[error("inclusion index ({i}, {j}) out of range 1..={n1} x 1..={n2}")]
    IndexOutOfRange { i: usize, j: usize, n1: usize, n2: usize },

    #[error("quadrature did not converge: estimate {value:e} with error {error:e}")]
    QuadratureNotConverged { value: f64, error: f64 },

    #[error("exterior solve failed: {0}")]
    Solver(String),

    #[error("particle {id} entered obstacle ({i}, {j}) at t = {t}")]
    Penetration { id: usize, i: usize, j: usize, t: f64 },

    #[error("empty particle set: {0}")]
    EmptyParticles(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
