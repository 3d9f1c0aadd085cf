#![allow(dead_code)]

pub mod bleu;
pub mod gradcheck;
