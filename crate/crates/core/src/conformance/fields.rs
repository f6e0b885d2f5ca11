//! `key=value` records separated by single spaces. Values are bare tokens or
//! double-quoted strings with `\"`, `\\` and `\n` escapes.

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Field {
    pub key: String,
    pub value: String,
    pub quoted: bool,
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

pub(crate) fn split_fields(line: &str) -> Result<Vec<Field>, String> {
    let mut fields = Vec::new();
    let mut chars = line.char_indices().peekable();
    loop {
        let key_start = match chars.peek() {
            Some(&(i, _)) => i,
            None => return Err("empty record".into()),
        };
        let mut key_end = None;
        for (i, c) in chars.by_ref() {
            if c == '=' {
                key_end = Some(i);
                break;
            }
            if c == ' ' || c == '"' {
                return Err(format!("malformed key at column {}", i + 1));
            }
        }
        let key_end = key_end.ok_or("expected `key=value`")?;
        let key = &line[key_start..key_end];
        if key.is_empty() {
            return Err(format!("empty key at column {}", key_start + 1));
        }

        let (value, quoted) = if matches!(chars.peek(), Some((_, '"'))) {
            chars.next();
            let mut value = String::new();
            let mut closed = false;
            while let Some((i, c)) = chars.next() {
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match chars.next() {
                        Some((_, '"')) => value.push('"'),
                        Some((_, '\\')) => value.push('\\'),
                        Some((_, 'n')) => value.push('\n'),
                        _ => return Err(format!("bad escape at column {}", i + 1)),
                    },
                    other => value.push(other),
                }
            }
            if !closed {
                return Err(format!("unterminated string for {key:?}"));
            }
            (value, true)
        } else {
            let mut value = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c == ' ' {
                    break;
                }
                if c == '"' || c == '=' {
                    return Err(format!("unexpected {c:?} in value of {key:?}"));
                }
                value.push(c);
                chars.next();
            }
            if value.is_empty() {
                return Err(format!("empty value for {key:?}"));
            }
            (value, false)
        };
        fields.push(Field { key: key.to_string(), value, quoted });

        match chars.next() {
            None => return Ok(fields),
            Some((i, ' ')) => {
                if matches!(chars.peek(), None | Some((_, ' '))) {
                    return Err(format!("expected a single space before a field at column {}", i + 1));
                }
            }
            Some((i, c)) => return Err(format!("unexpected {c:?} at column {}", i + 1)),
        }
    }
}
