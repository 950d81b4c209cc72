//! Command-line and HTTP front ends for the `hewe` library.

pub mod service;
pub mod store;

use hewe::HeweError;

/// Parses `30,35,40` or an inclusive `first:last:step` range.
pub fn parse_endpoints(text: &str) -> Result<Vec<usize>, HeweError> {
    let bad = || HeweError::InvalidConfig(format!("bad endpoint list {text:?}"));
    let num = |p: &str| p.trim().parse::<usize>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    let list = match parts.as_slice() {
        [one] => one.split(',').filter(|p| !p.trim().is_empty()).map(num).collect::<Result<Vec<_>, _>>()?,
        [first, last, step] => {
            let (first, last, step) = (num(first)?, num(last)?, num(step)?);
            if step == 0 || last < first {
                return Err(bad());
            }
            (first..=last).step_by(step).collect()
        }
        _ => return Err(bad()),
    };
    if list.is_empty() {
        return Err(bad());
    }
    Ok(list)
}

/// Process exit status for an error: 2 for bad input, 3 for a failed fit.
pub fn exit_code(e: &HeweError) -> i32 {
    if e.is_input_error() {
        2
    } else {
        3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_lists() {
        assert_eq!(parse_endpoints("30,35, 40").unwrap(), vec![30, 35, 40]);
        assert_eq!(parse_endpoints("20:30:5").unwrap(), vec![20, 25, 30]);
        assert!(parse_endpoints("30:20:5").is_err());
        assert!(parse_endpoints("a,b").is_err());
        assert!(parse_endpoints("").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&HeweError::EmptyData), 2);
        assert_eq!(exit_code(&HeweError::EstimationFailed("x".into())), 3);
    }
}
