//! Integer and grid arguments.

use anyhow::{anyhow, bail, Context, Result};

/// Parse a non-negative integer written as `1000`, `1e3`, `2.5e4`, `2^30`
/// or `1_000_000`. Scientific forms must denote an exact integer.
pub fn parse_number(s: &str) -> Result<u64> {
    let t: String = s.trim().chars().filter(|&c| c != '_').collect();
    if t.is_empty() {
        bail!("empty number");
    }
    if let Some((b, k)) = t.split_once('^') {
        let base: u64 = b.parse().with_context(|| format!("bad base in {s:?}"))?;
        let exp: u32 = k.parse().with_context(|| format!("bad exponent in {s:?}"))?;
        return base.checked_pow(exp).ok_or_else(|| anyhow!("{s} overflows 64 bits"));
    }
    if let Some((m, e)) = t.split_once(['e', 'E']) {
        let exp: u32 = e.parse().with_context(|| format!("bad exponent in {s:?}"))?;
        let (int, frac) = m.split_once('.').unwrap_or((m, ""));
        if int.is_empty() && frac.is_empty() {
            bail!("bad mantissa in {s:?}");
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            bail!("bad mantissa in {s:?}");
        }
        let frac = frac.trim_end_matches('0');
        let shift = exp
            .checked_sub(frac.len() as u32)
            .ok_or_else(|| anyhow!("{s} is not an integer"))?;
        let digits: u64 = format!("{int}{frac}")
            .parse()
            .with_context(|| format!("{s} overflows 64 bits"))?;
        return 10u64
            .checked_pow(shift)
            .and_then(|p| digits.checked_mul(p))
            .ok_or_else(|| anyhow!("{s} overflows 64 bits"));
    }
    t.parse().with_context(|| format!("not an integer: {s:?}"))
}

/// Parse `"(x,y);(x,y);..."`. Whitespace is ignored.
pub fn parse_grid(s: &str) -> Result<Vec<(u64, u64)>> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let mut out = Vec::new();
    for item in t.split(';').filter(|i| !i.is_empty()) {
        let inner = item
            .strip_prefix('(')
            .and_then(|i| i.strip_suffix(')'))
            .ok_or_else(|| anyhow!("grid point {item:?} must look like (x,y)"))?;
        let (x, y) = inner
            .split_once(',')
            .ok_or_else(|| anyhow!("grid point {item:?} must look like (x,y)"))?;
        out.push((parse_number(x)?, parse_number(y)?));
    }
    if out.is_empty() {
        bail!("empty grid");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers() {
        assert_eq!(parse_number("1000").unwrap(), 1000);
        assert_eq!(parse_number("1e3").unwrap(), 1000);
        assert_eq!(parse_number("2.5e4").unwrap(), 25_000);
        assert_eq!(parse_number("1.50e1").unwrap(), 15);
        assert_eq!(parse_number("2^30").unwrap(), 1 << 30);
        assert_eq!(parse_number("1_000").unwrap(), 1000);
        assert!(parse_number("1.5e0").is_err());
        assert!(parse_number("-3").is_err());
        assert!(parse_number("2^64").is_err());
        assert!(parse_number("1e20").is_err());
        assert!(parse_number("e5").is_err());
        assert!(parse_number("").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(
            parse_grid("(1e3,5); (1e5,13);(1e7,23)").unwrap(),
            vec![(1000, 5), (100_000, 13), (10_000_000, 23)]
        );
        assert_eq!(parse_grid("(3,2);").unwrap(), vec![(3, 2)]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("(3,2").is_err());
        assert!(parse_grid("(3;2)").is_err());
    }
}
