#![allow(dead_code)]

pub mod pauli;
