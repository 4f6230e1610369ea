pub mod fit;
pub mod gen;
pub mod kpca;
pub mod rank;
pub mod track;
