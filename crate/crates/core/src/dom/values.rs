//! Canonical forms for declared values so equivalent spellings compare equal:
//! colors become `#rrggbb`, numbers lose redundant zeros, `bold`/`normal`
//! become `700`/`400`, and everything else is trimmed, lowercased and
//! whitespace-collapsed.

/// CSS named colors.
const NAMED_COLORS: &[(&str, &str)] = &[
    ("aliceblue", "#f0f8ff"),
    ("antiquewhite", "#faebd7"),
    ("aqua", "#00ffff"),
    ("aquamarine", "#7fffd4"),
    ("azure", "#f0ffff"),
    ("beige", "#f5f5dc"),
    ("bisque", "#ffe4c4"),
    ("black", "#000000"),
    ("blanchedalmond", "#ffebcd"),
    ("blue", "#0000ff"),
    ("blueviolet", "#8a2be2"),
    ("brown", "#a52a2a"),
    ("burlywood", "#deb887"),
    ("cadetblue", "#5f9ea0"),
    ("chartreuse", "#7fff00"),
    ("chocolate", "#d2691e"),
    ("coral", "#ff7f50"),
    ("cornflowerblue", "#6495ed"),
    ("cornsilk", "#fff8dc"),
    ("crimson", "#dc143c"),
    ("cyan", "#00ffff"),
    ("darkblue", "#00008b"),
    ("darkcyan", "#008b8b"),
    ("darkgoldenrod", "#b8860b"),
    ("darkgray", "#a9a9a9"),
    ("darkgreen", "#006400"),
    ("darkgrey", "#a9a9a9"),
    ("darkkhaki", "#bdb76b"),
    ("darkmagenta", "#8b008b"),
    ("darkolivegreen", "#556b2f"),
    ("darkorange", "#ff8c00"),
    ("darkorchid", "#9932cc"),
    ("darkred", "#8b0000"),
    ("darksalmon", "#e9967a"),
    ("darkseagreen", "#8fbc8f"),
    ("darkslateblue", "#483d8b"),
    ("darkslategray", "#2f4f4f"),
    ("darkslategrey", "#2f4f4f"),
    ("darkturquoise", "#00ced1"),
    ("darkviolet", "#9400d3"),
    ("deeppink", "#ff1493"),
    ("deepskyblue", "#00bfff"),
    ("dimgray", "#696969"),
    ("dimgrey", "#696969"),
    ("dodgerblue", "#1e90ff"),
    ("firebrick", "#b22222"),
    ("floralwhite", "#fffaf0"),
    ("forestgreen", "#228b22"),
    ("fuchsia", "#ff00ff"),
    ("gainsboro", "#dcdcdc"),
    ("ghostwhite", "#f8f8ff"),
    ("gold", "#ffd700"),
    ("goldenrod", "#daa520"),
    ("gray", "#808080"),
    ("green", "#008000"),
    ("greenyellow", "#adff2f"),
    ("grey", "#808080"),
    ("honeydew", "#f0fff0"),
    ("hotpink", "#ff69b4"),
    ("indianred", "#cd5c5c"),
    ("indigo", "#4b0082"),
    ("ivory", "#fffff0"),
    ("khaki", "#f0e68c"),
    ("lavender", "#e6e6fa"),
    ("lavenderblush", "#fff0f5"),
    ("lawngreen", "#7cfc00"),
    ("lemonchiffon", "#fffacd"),
    ("lightblue", "#add8e6"),
    ("lightcoral", "#f08080"),
    ("lightcyan", "#e0ffff"),
    ("lightgoldenrodyellow", "#fafad2"),
    ("lightgray", "#d3d3d3"),
    ("lightgreen", "#90ee90"),
    ("lightgrey", "#d3d3d3"),
    ("lightpink", "#ffb6c1"),
    ("lightsalmon", "#ffa07a"),
    ("lightseagreen", "#20b2aa"),
    ("lightskyblue", "#87cefa"),
    ("lightslategray", "#778899"),
    ("lightslategrey", "#778899"),
    ("lightsteelblue", "#b0c4de"),
    ("lightyellow", "#ffffe0"),
    ("lime", "#00ff00"),
    ("limegreen", "#32cd32"),
    ("linen", "#faf0e6"),
    ("magenta", "#ff00ff"),
    ("maroon", "#800000"),
    ("mediumaquamarine", "#66cdaa"),
    ("mediumblue", "#0000cd"),
    ("mediumorchid", "#ba55d3"),
    ("mediumpurple", "#9370db"),
    ("mediumseagreen", "#3cb371"),
    ("mediumslateblue", "#7b68ee"),
    ("mediumspringgreen", "#00fa9a"),
    ("mediumturquoise", "#48d1cc"),
    ("mediumvioletred", "#c71585"),
    ("midnightblue", "#191970"),
    ("mintcream", "#f5fffa"),
    ("mistyrose", "#ffe4e1"),
    ("moccasin", "#ffe4b5"),
    ("navajowhite", "#ffdead"),
    ("navy", "#000080"),
    ("oldlace", "#fdf5e6"),
    ("olive", "#808000"),
    ("olivedrab", "#6b8e23"),
    ("orange", "#ffa500"),
    ("orangered", "#ff4500"),
    ("orchid", "#da70d6"),
    ("palegoldenrod", "#eee8aa"),
    ("palegreen", "#98fb98"),
    ("paleturquoise", "#afeeee"),
    ("palevioletred", "#db7093"),
    ("papayawhip", "#ffefd5"),
    ("peachpuff", "#ffdab9"),
    ("peru", "#cd853f"),
    ("pink", "#ffc0cb"),
    ("plum", "#dda0dd"),
    ("powderblue", "#b0e0e6"),
    ("purple", "#800080"),
    ("rebeccapurple", "#663399"),
    ("red", "#ff0000"),
    ("rosybrown", "#bc8f8f"),
    ("royalblue", "#4169e1"),
    ("saddlebrown", "#8b4513"),
    ("salmon", "#fa8072"),
    ("sandybrown", "#f4a460"),
    ("seagreen", "#2e8b57"),
    ("seashell", "#fff5ee"),
    ("sienna", "#a0522d"),
    ("silver", "#c0c0c0"),
    ("skyblue", "#87ceeb"),
    ("slateblue", "#6a5acd"),
    ("slategray", "#708090"),
    ("slategrey", "#708090"),
    ("snow", "#fffafa"),
    ("springgreen", "#00ff7f"),
    ("steelblue", "#4682b4"),
    ("tan", "#d2b48c"),
    ("teal", "#008080"),
    ("thistle", "#d8bfd8"),
    ("tomato", "#ff6347"),
    ("turquoise", "#40e0d0"),
    ("violet", "#ee82ee"),
    ("wheat", "#f5deb3"),
    ("white", "#ffffff"),
    ("whitesmoke", "#f5f5f5"),
    ("yellow", "#ffff00"),
    ("yellowgreen", "#9acd32"),
];

pub fn named_color(name: &str) -> Option<&'static str> {
    NAMED_COLORS
        .binary_search_by(|(n, _)| n.cmp(&name))
        .ok()
        .map(|i| NAMED_COLORS[i].1)
}

/// Whether a word is a named color (used by the suggestion heuristic).
pub fn is_named_color(word: &str) -> bool {
    named_color(&word.to_ascii_lowercase()).is_some()
}

/// How a property's values are canonicalized and checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyClass {
    /// A single color value.
    Color,
    /// Lengths, percentages and sizing keywords.
    Length,
    FontWeight,
    /// Shorthands whose tokens may include colors (`border`, `background`).
    ColorBearing,
    Other,
}

const LENGTH_PROPERTIES: &[&str] = &[
    "width", "height", "min-width", "max-width", "min-height", "max-height", "font-size",
    "margin", "margin-top", "margin-right", "margin-bottom", "margin-left", "padding",
    "padding-top", "padding-right", "padding-bottom", "padding-left", "top", "right", "bottom",
    "left", "gap", "row-gap", "column-gap", "border-width", "border-radius", "line-height",
    "letter-spacing",
];

const LENGTH_KEYWORDS: &[&str] = &[
    "auto", "none", "normal", "fit-content", "min-content", "max-content", "thin", "medium",
    "thick", "xx-small", "x-small", "small", "large", "x-large", "xx-large", "smaller", "larger",
];

const GLOBAL_KEYWORDS: &[&str] = &["inherit", "initial", "unset", "revert"];

pub fn property_class(property: &str) -> PropertyClass {
    let p = property.trim().to_ascii_lowercase();
    if p == "color" || p.ends_with("-color") {
        PropertyClass::Color
    } else if p == "font-weight" {
        PropertyClass::FontWeight
    } else if LENGTH_PROPERTIES.contains(&p.as_str()) {
        PropertyClass::Length
    } else if p == "background"
        || p == "outline"
        || p == "border"
        || p.starts_with("border-")
        || p.ends_with("-shadow")
    {
        PropertyClass::ColorBearing
    } else {
        PropertyClass::Other
    }
}

/// Result of normalization plus whether the value was understood for its
/// property class. Values of [`PropertyClass::Other`] are always recognized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub value: String,
    pub recognized: bool,
}

pub fn normalize_value(property: &str, raw: &str) -> String {
    normalize_checked(property, raw).value
}

pub fn normalize_checked(property: &str, raw: &str) -> Normalized {
    let class = property_class(property);
    let tokens = tokenize(&raw.trim().to_lowercase());
    let mut canonical: Vec<String> = Vec::with_capacity(tokens.len());
    for token in &tokens {
        canonical.push(canonical_token(class, token));
    }
    let value = join_tokens(&canonical);
    let value = match (class, value.as_str()) {
        (PropertyClass::FontWeight, "bold") => "700".to_owned(),
        (PropertyClass::FontWeight, "normal") => "400".to_owned(),
        _ => value,
    };
    let recognized = recognized(class, &value, &canonical);
    Normalized { value, recognized }
}

fn recognized(class: PropertyClass, value: &str, tokens: &[String]) -> bool {
    if GLOBAL_KEYWORDS.contains(&value) {
        return true;
    }
    match class {
        PropertyClass::Color => {
            tokens.len() == 1
                && (is_hex_color(value) || matches!(value, "transparent" | "currentcolor"))
        }
        PropertyClass::FontWeight => matches!(
            value,
            "100" | "200" | "300" | "400" | "500" | "600" | "700" | "800" | "900" | "bolder" | "lighter"
        ),
        PropertyClass::Length => {
            !tokens.is_empty()
                && tokens
                    .iter()
                    .all(|t| split_number(t).is_some() || LENGTH_KEYWORDS.contains(&t.as_str()))
        }
        PropertyClass::ColorBearing | PropertyClass::Other => true,
    }
}

/// Splits on top-level whitespace; commas become their own tokens and
/// whitespace inside parentheses is dropped.
fn tokenize(value: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut depth = 0usize;
    for c in value.chars() {
        match c {
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            c if c.is_whitespace() => {
                if depth == 0 && !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            ',' if depth == 0 => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(",".to_owned());
            }
            c => current.push(c),
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn join_tokens(tokens: &[String]) -> String {
    let mut out = String::new();
    for token in tokens {
        if token == "," {
            out.push(',');
        } else {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(token);
        }
    }
    out
}

fn canonical_token(class: PropertyClass, token: &str) -> String {
    if let Some((number, unit)) = split_number(token) {
        return format!("{}{unit}", canonical_number(number));
    }
    if matches!(class, PropertyClass::Color | PropertyClass::ColorBearing) {
        if let Some(hex) = color_to_hex(token) {
            return hex;
        }
    }
    token.to_owned()
}

/// Splits `12.50px` into (`12.50`, `px`). Units are letters or `%`.
fn split_number(token: &str) -> Option<(&str, &str)> {
    let bytes = token.as_bytes();
    let mut i = 0;
    if matches!(bytes.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let digits_start = i;
    let mut digits = 0;
    let mut dots = 0;
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
        if bytes[i] == b'.' {
            dots += 1;
        } else {
            digits += 1;
        }
        i += 1;
    }
    if digits == 0 || dots > 1 || bytes[i - 1] == b'.' && i == digits_start + 1 {
        return None;
    }
    let unit = &token[i..];
    if unit == "%" || unit.bytes().all(|b| b.is_ascii_alphabetic()) {
        Some((&token[..i], unit))
    } else {
        None
    }
}

/// Textual canonical decimal: no sign on zero, no leading `+`, no leading
/// zeros in the integer part, no trailing zeros in the fraction.
fn canonical_number(number: &str) -> String {
    let (negative, body) = match number.as_bytes().first() {
        Some(b'-') => (true, &number[1..]),
        Some(b'+') => (false, &number[1..]),
        _ => (false, number),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let int = int.trim_start_matches('0');
    let frac = frac.trim_end_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    let mut out = String::new();
    if negative && !(int == "0" && frac.is_empty()) {
        out.push('-');
    }
    out.push_str(int);
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    out
}

fn is_hex_color(s: &str) -> bool {
    s.len() == 7 && s.starts_with('#') && s[1..].bytes().all(|b| b.is_ascii_hexdigit())
}

fn color_to_hex(token: &str) -> Option<String> {
    if let Some(hex) = named_color(token) {
        return Some(hex.to_owned());
    }
    if let Some(digits) = token.strip_prefix('#') {
        if !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        return match digits.len() {
            3 => Some(digits.chars().flat_map(|c| [c, c]).fold("#".to_owned(), |mut s, c| {
                s.push(c);
                s
            })),
            6 | 8 => Some(format!("#{digits}")),
            _ => None,
        };
    }
    let args = token
        .strip_prefix("rgb(")
        .or_else(|| token.strip_prefix("rgba("))?
        .strip_suffix(')')?;
    let parts: Vec<&str> = args.split(',').collect();
    let channels = match parts.len() {
        3 => &parts[..],
        4 if parts[3].parse::<f64>().ok() == Some(1.0) => &parts[..3],
        _ => return None,
    };
    let mut hex = String::from("#");
    for c in channels {
        let v: u8 = c.parse().ok()?;
        hex.push_str(&format!("{v:02x}"));
    }
    Some(hex)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_sorted_for_binary_search() {
        assert!(NAMED_COLORS.windows(2).all(|w| w[0].0 < w[1].0));
        assert_eq!(NAMED_COLORS.len(), 148);
    }

    #[test]
    fn colors() {
        assert_eq!(normalize_value("background-color", "RED"), "#ff0000");
        assert_eq!(normalize_value("background-color", "darkred"), "#8b0000");
        assert_eq!(normalize_value("color", "#ABC"), "#aabbcc");
        assert_eq!(normalize_value("color", "rgb(255, 0, 0)"), "#ff0000");
        assert_eq!(normalize_value("border", "1px  solid Red"), "1px solid #ff0000");
    }

    #[test]
    fn lengths_and_weights() {
        assert_eq!(normalize_value("font-weight", "bold"), "700");
        assert_eq!(normalize_value("font-weight", "Normal"), "400");
        assert_eq!(normalize_value("width", "350px"), normalize_value("width", "350.0px"));
        assert_eq!(normalize_value("font-size", "25.0PX"), "25px");
        assert_eq!(normalize_value("margin", "0.50em 010px -0px"), "0.5em 10px 0px");
        assert_eq!(normalize_value("width", ".5px"), "0.5px");
        assert_eq!(normalize_value("width", "50.0%"), "50%");
    }

    #[test]
    fn other_values() {
        assert_eq!(normalize_value("justify-content", "  Space-Between "), "space-between");
        assert_eq!(normalize_value("font-family", "Arial ,  Sans-Serif"), "arial, sans-serif");
        assert_eq!(normalize_value("display", "FLEX"), "flex");
    }

    #[test]
    fn recognition() {
        assert!(normalize_checked("width", "350px").recognized);
        assert!(normalize_checked("width", "auto").recognized);
        assert!(!normalize_checked("width", "wide").recognized);
        assert!(!normalize_checked("color", "reddish").recognized);
        assert!(normalize_checked("font-weight", "bold").recognized);
        assert!(!normalize_checked("font-weight", "heavy").recognized);
        assert!(normalize_checked("display", "anything").recognized);
    }

    #[test]
    fn idempotent_on_examples() {
        for (p, v) in [
            ("color", "RED"),
            ("width", "350.0px"),
            ("font-weight", "bold"),
            ("border", "1px solid red"),
            ("font-family", "a , b"),
            ("margin", "-0.0px +3.10em"),
        ] {
            let once = normalize_value(p, v);
            assert_eq!(normalize_value(p, &once), once, "{p}: {v}");
        }
    }
}
