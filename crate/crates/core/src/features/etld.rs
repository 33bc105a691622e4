//! Registrable-domain (eTLD+1) extraction backed by the compiled-in Public
//! Suffix List snapshot of the `psl` crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrableDomain {
    pub name: String,
    /// False when the name is itself a public suffix (or a bare single label).
    pub registrable: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("empty domain name")]
    Empty,
    #[error("invalid label in {0:?}")]
    InvalidLabel(String),
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label.len() <= 63
        && label
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

pub fn etld1(qname: &str) -> Result<RegistrableDomain, DomainError> {
    let name = qname.trim().trim_end_matches('.').to_ascii_lowercase();
    if name.is_empty() {
        return Err(DomainError::Empty);
    }
    if !name.split('.').all(valid_label) {
        return Err(DomainError::InvalidLabel(qname.to_string()));
    }
    match psl::domain_str(&name) {
        Some(domain) => Ok(RegistrableDomain {
            name: domain.to_string(),
            registrable: true,
        }),
        None => Ok(RegistrableDomain {
            name,
            registrable: false,
        }),
    }
}
