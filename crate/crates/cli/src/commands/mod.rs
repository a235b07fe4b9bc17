pub mod detect;
pub mod evaluate;
pub mod integrate;
pub mod simulate;
pub mod track;
