//! Recursive-descent parser for the subset of Solidity found in method-level
//! corpora: contract wrappers, functions, modifiers, events, errors, structs,
//! enums, state variables and the full statement/expression grammar.
//!
//! The output is an untyped [`Node`] tree; inline assembly bodies are kept as
//! opaque leaves.

use std::fmt;

use super::lexer::{is_elementary_type, tokenize, LexError, Token, TokenKind};

const MAX_DEPTH: usize = 200;

/// Words that can never start an identifier expression.
const RESERVED: &[&str] = &[
    "abstract", "anonymous", "assembly", "break", "calldata", "catch", "constant", "constructor", "continue",
    "contract", "delete", "do", "else", "emit", "enum", "event", "external", "for", "function", "if",
    "immutable", "import", "indexed", "interface", "internal", "is", "library", "mapping", "memory", "modifier",
    "new", "override", "pragma", "private", "public", "pure", "return", "returns", "storage", "struct", "throw",
    "try", "unchecked", "using", "var", "view", "virtual", "while", "true", "false",
];

const STORAGE_LOCATIONS: &[&str] = &["memory", "storage", "calldata"];

const FUNCTION_SPECIFIERS: &[&str] = &[
    "public", "private", "internal", "external", "pure", "view", "payable", "constant", "virtual",
];

const ASSIGNMENT_OPS: &[&str] = &["=", "|=", "^=", "&=", "<<=", ">>=", ">>>=", "+=", "-=", "*=", "/=", "%="];

const ETHER_UNITS: &[&str] = &[
    "wei", "gwei", "szabo", "finney", "ether", "seconds", "minutes", "hours", "days", "weeks", "years",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    PragmaDirective,
    ImportDirective,
    ContractDefinition,
    InheritanceSpecifier,
    UsingForDirective,
    StructDefinition,
    EnumDefinition,
    EventDefinition,
    ErrorDefinition,
    UserDefinedValueType,
    StateVariableDeclaration,
    FunctionDefinition,
    ModifierDefinition,
    ParameterList,
    ReturnParameters,
    Parameter,
    ModifierInvocation,
    OverrideSpecifier,
    Specifier,
    ElementaryTypeName,
    UserDefinedTypeName,
    Mapping,
    ArrayTypeName,
    FunctionTypeName,
    Block,
    UncheckedBlock,
    IfStatement,
    ForStatement,
    WhileStatement,
    DoWhileStatement,
    Continue,
    Break,
    Return,
    Throw,
    EmitStatement,
    RevertStatement,
    PlaceholderStatement,
    InlineAssembly,
    TryStatement,
    CatchClause,
    VariableDeclarationStatement,
    VariableDeclaration,
    ExpressionStatement,
    Assignment,
    Conditional,
    BinaryOperation,
    UnaryOperation,
    UnaryOperationPostfix,
    FunctionCall,
    FunctionCallOptions,
    NameValue,
    IndexAccess,
    IndexRangeAccess,
    MemberAccess,
    NewExpression,
    TupleExpression,
    InlineArray,
    Identifier,
    NumberLiteral,
    StringLiteral,
    HexLiteral,
    BoolLiteral,
    Empty,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        use NodeKind::*;
        match self {
            PragmaDirective => "PragmaDirective",
            ImportDirective => "ImportDirective",
            ContractDefinition => "ContractDefinition",
            InheritanceSpecifier => "InheritanceSpecifier",
            UsingForDirective => "UsingForDirective",
            StructDefinition => "StructDefinition",
            EnumDefinition => "EnumDefinition",
            EventDefinition => "EventDefinition",
            ErrorDefinition => "ErrorDefinition",
            UserDefinedValueType => "UserDefinedValueType",
            StateVariableDeclaration => "StateVariableDeclaration",
            FunctionDefinition => "FunctionDefinition",
            ModifierDefinition => "ModifierDefinition",
            ParameterList => "ParameterList",
            ReturnParameters => "ReturnParameters",
            Parameter => "Parameter",
            ModifierInvocation => "ModifierInvocation",
            OverrideSpecifier => "OverrideSpecifier",
            Specifier => "Specifier",
            ElementaryTypeName => "ElementaryTypeName",
            UserDefinedTypeName => "UserDefinedTypeName",
            Mapping => "Mapping",
            ArrayTypeName => "ArrayTypeName",
            FunctionTypeName => "FunctionTypeName",
            Block => "Block",
            UncheckedBlock => "UncheckedBlock",
            IfStatement => "IfStatement",
            ForStatement => "ForStatement",
            WhileStatement => "WhileStatement",
            DoWhileStatement => "DoWhileStatement",
            Continue => "Continue",
            Break => "Break",
            Return => "Return",
            Throw => "Throw",
            EmitStatement => "EmitStatement",
            RevertStatement => "RevertStatement",
            PlaceholderStatement => "PlaceholderStatement",
            InlineAssembly => "InlineAssembly",
            TryStatement => "TryStatement",
            CatchClause => "CatchClause",
            VariableDeclarationStatement => "VariableDeclarationStatement",
            VariableDeclaration => "VariableDeclaration",
            ExpressionStatement => "ExpressionStatement",
            Assignment => "Assignment",
            Conditional => "Conditional",
            BinaryOperation => "BinaryOperation",
            UnaryOperation => "UnaryOperation",
            UnaryOperationPostfix => "UnaryOperationPostfix",
            FunctionCall => "FunctionCall",
            FunctionCallOptions => "FunctionCallOptions",
            NameValue => "NameValue",
            IndexAccess => "IndexAccess",
            IndexRangeAccess => "IndexRangeAccess",
            MemberAccess => "MemberAccess",
            NewExpression => "NewExpression",
            TupleExpression => "TupleExpression",
            InlineArray => "InlineArray",
            Identifier => "Identifier",
            NumberLiteral => "NumberLiteral",
            StringLiteral => "StringLiteral",
            HexLiteral => "HexLiteral",
            BoolLiteral => "BoolLiteral",
            Empty => "Empty",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A syntax-tree node. Leaves carrying source text (identifiers, literals,
/// type names, specifiers) have `value` set and no children; operators store
/// their symbol in `value` alongside their operands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub value: Option<String>,
    pub children: Vec<Node>,
}

impl Node {
    pub fn new(kind: NodeKind, children: Vec<Node>) -> Self {
        Self {
            kind,
            value: None,
            children,
        }
    }

    pub fn leaf(kind: NodeKind, value: impl Into<String>) -> Self {
        Self {
            kind,
            value: Some(value.into()),
            children: Vec::new(),
        }
    }

    pub fn marker(kind: NodeKind) -> Self {
        Self::new(kind, Vec::new())
    }

    pub fn with_value(kind: NodeKind, value: impl Into<String>, children: Vec<Node>) -> Self {
        Self {
            kind,
            value: Some(value.into()),
            children,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseError {
    Lex(LexError),
    Syntax { offset: usize, message: String },
    TooDeep,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Lex(e) => write!(f, "lex error: {e}"),
            ParseError::Syntax { offset, message } => write!(f, "syntax error at byte {offset}: {message}"),
            ParseError::TooDeep => write!(f, "nesting deeper than {MAX_DEPTH}"),
        }
    }
}

impl std::error::Error for ParseError {}

type PResult<T> = Result<T, ParseError>;

/// Parses a source fragment into its top-level nodes.
///
/// Fragments are tried first as a sequence of definitions (contracts,
/// functions, modifiers, ...) and then as a bare statement list.
pub fn parse(src: &str) -> Result<Vec<Node>, ParseError> {
    let tokens = tokenize(src).map_err(ParseError::Lex)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        depth: 0,
        end: src.len(),
    };
    match parser.source_unit() {
        Ok(nodes) => Ok(nodes),
        Err(first) => {
            let mut parser = Parser {
                tokens: &tokens,
                pos: 0,
                depth: 0,
                end: src.len(),
            };
            parser.statement_list().map_err(|second| match second {
                ParseError::TooDeep => second,
                _ => first,
            })
        }
    }
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    depth: usize,
    end: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&'t Token> {
        self.tokens.get(self.pos + k)
    }

    fn text(&self) -> &'t str {
        self.peek().map_or("", |t| t.text.as_str())
    }

    fn text_at(&self, k: usize) -> &'t str {
        self.peek_at(k).map_or("", |t| t.text.as_str())
    }

    fn at_eof(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    /// True if the current token is punctuation or a word with exactly `s`.
    fn at(&self, s: &str) -> bool {
        self.peek()
            .is_some_and(|t| matches!(t.kind, TokenKind::Punct | TokenKind::Word) && t.text == s)
    }

    fn at_any(&self, set: &[&str]) -> bool {
        set.iter().any(|s| self.at(s))
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.at(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn bump(&mut self) -> &'t Token {
        let tok = &self.tokens[self.pos];
        self.pos += 1;
        tok
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError::Syntax {
            offset: self.peek().map_or(self.end, |t| t.offset),
            message: message.into(),
        })
    }

    fn expect(&mut self, s: &str) -> PResult<()> {
        if self.eat(s) {
            Ok(())
        } else {
            let found = self.peek().map_or("end of input".to_owned(), |t| format!("{:?}", t.text));
            self.error(format!("expected {s:?}, found {found}"))
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(ParseError::TooDeep)
        } else {
            Ok(())
        }
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn at_identifier(&self) -> bool {
        self.peek()
            .is_some_and(|t| t.kind == TokenKind::Word && !RESERVED.contains(&t.text.as_str()))
    }

    fn identifier(&mut self) -> PResult<Node> {
        if self.at_identifier() {
            Ok(Node::leaf(NodeKind::Identifier, self.bump().text.clone()))
        } else {
            self.error("expected identifier")
        }
    }

    /// Identifier that may also be a contextual keyword (member names, paths).
    fn any_word(&mut self) -> PResult<Node> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Word => Ok(Node::leaf(NodeKind::Identifier, self.bump().text.clone())),
            _ => self.error("expected name"),
        }
    }

    fn skip_until_semicolon(&mut self) -> PResult<()> {
        while !self.at(";") {
            if self.at_eof() {
                return self.error("missing ';'");
            }
            self.pos += 1;
        }
        self.pos += 1;
        Ok(())
    }

    // ---------------------------------------------------------------- items

    fn source_unit(&mut self) -> PResult<Vec<Node>> {
        let mut items = Vec::new();
        while !self.at_eof() {
            items.push(self.item()?);
        }
        Ok(items)
    }

    fn statement_list(&mut self) -> PResult<Vec<Node>> {
        let mut items = Vec::new();
        while !self.at_eof() {
            items.push(self.statement()?);
        }
        Ok(items)
    }

    fn item(&mut self) -> PResult<Node> {
        match self.text() {
            "pragma" => {
                self.pos += 1;
                self.skip_until_semicolon()?;
                Ok(Node::marker(NodeKind::PragmaDirective))
            }
            "import" => {
                self.pos += 1;
                self.skip_until_semicolon()?;
                Ok(Node::marker(NodeKind::ImportDirective))
            }
            "abstract" | "contract" | "interface" | "library" => self.contract(),
            "function" | "constructor" | "fallback" | "receive"
                if self.text() == "function" || self.text_at(1) == "(" =>
            {
                self.function()
            }
            "modifier" => self.modifier(),
            "event" => self.event(),
            "error" if self.text_at(2) == "(" => self.error_definition(),
            "struct" => self.struct_definition(),
            "enum" => self.enum_definition(),
            "using" => self.using_for(),
            "type" if self.text_at(2) == "is" => {
                self.pos += 1;
                let name = self.identifier()?;
                self.expect("is")?;
                let ty = self.type_name()?;
                self.expect(";")?;
                Ok(Node::new(NodeKind::UserDefinedValueType, vec![name, ty]))
            }
            _ => self.state_variable(),
        }
    }

    fn contract(&mut self) -> PResult<Node> {
        let mut prefix = String::new();
        if self.eat("abstract") {
            prefix.push_str("abstract ");
        }
        let keyword = self.bump().text.clone();
        let mut children = vec![self.identifier()?];
        if self.eat("is") {
            loop {
                let mut spec = vec![self.user_type_path()?];
                if self.at("(") {
                    spec.extend(self.call_arguments()?);
                }
                children.push(Node::new(NodeKind::InheritanceSpecifier, spec));
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect("{")?;
        while !self.eat("}") {
            if self.at_eof() {
                return self.error("unterminated contract body");
            }
            children.push(self.item()?);
        }
        Ok(Node::with_value(
            NodeKind::ContractDefinition,
            format!("{prefix}{keyword}"),
            children,
        ))
    }

    fn function(&mut self) -> PResult<Node> {
        self.enter()?;
        let keyword = self.bump().text.clone();
        let mut node = if keyword == "function" {
            let mut n = Node::marker(NodeKind::FunctionDefinition);
            // Pre-0.6 fallback functions are unnamed.
            if !self.at("(") {
                n.children.push(self.any_word()?);
            }
            n
        } else {
            Node::with_value(NodeKind::FunctionDefinition, keyword, Vec::new())
        };
        node.children.push(self.parameter_list(NodeKind::ParameterList)?);
        node.children.extend(self.function_specifiers()?);
        if self.eat("returns") {
            node.children.push(self.parameter_list(NodeKind::ReturnParameters)?);
        }
        if !self.eat(";") {
            node.children.push(self.block()?);
        }
        self.leave();
        Ok(node)
    }

    fn modifier(&mut self) -> PResult<Node> {
        self.enter()?;
        self.expect("modifier")?;
        let mut node = Node::new(NodeKind::ModifierDefinition, vec![self.identifier()?]);
        if self.at("(") {
            node.children.push(self.parameter_list(NodeKind::ParameterList)?);
        }
        node.children.extend(self.function_specifiers()?);
        if !self.eat(";") {
            node.children.push(self.block()?);
        }
        self.leave();
        Ok(node)
    }

    fn function_specifiers(&mut self) -> PResult<Vec<Node>> {
        let mut out = Vec::new();
        loop {
            if self.at_any(FUNCTION_SPECIFIERS) {
                out.push(Node::leaf(NodeKind::Specifier, self.bump().text.clone()));
            } else if self.at("override") {
                out.push(self.override_specifier()?);
            } else if self.at_identifier() {
                let mut inv = vec![self.user_type_path()?];
                if self.at("(") {
                    inv.extend(self.call_arguments()?);
                }
                out.push(Node::new(NodeKind::ModifierInvocation, inv));
            } else {
                return Ok(out);
            }
        }
    }

    fn override_specifier(&mut self) -> PResult<Node> {
        self.expect("override")?;
        let mut paths = Vec::new();
        if self.eat("(") {
            loop {
                paths.push(self.user_type_path()?);
                if !self.eat(",") {
                    break;
                }
            }
            self.expect(")")?;
        }
        Ok(Node::new(NodeKind::OverrideSpecifier, paths))
    }

    fn parameter_list(&mut self, kind: NodeKind) -> PResult<Node> {
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.eat(")") {
            loop {
                params.push(self.parameter()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(Node::new(kind, params))
    }

    fn parameter(&mut self) -> PResult<Node> {
        let mut children = vec![self.type_name()?];
        while self.at_any(STORAGE_LOCATIONS) || self.at("indexed") {
            children.push(Node::leaf(NodeKind::Specifier, self.bump().text.clone()));
        }
        if self.at_identifier() {
            children.push(self.identifier()?);
        }
        Ok(Node::new(NodeKind::Parameter, children))
    }

    fn event(&mut self) -> PResult<Node> {
        self.expect("event")?;
        let name = self.identifier()?;
        let params = self.parameter_list(NodeKind::ParameterList)?;
        let mut children = vec![name, params];
        if self.eat("anonymous") {
            children.push(Node::leaf(NodeKind::Specifier, "anonymous"));
        }
        self.expect(";")?;
        Ok(Node::new(NodeKind::EventDefinition, children))
    }

    fn error_definition(&mut self) -> PResult<Node> {
        self.expect("error")?;
        let name = self.identifier()?;
        let params = self.parameter_list(NodeKind::ParameterList)?;
        self.expect(";")?;
        Ok(Node::new(NodeKind::ErrorDefinition, vec![name, params]))
    }

    fn struct_definition(&mut self) -> PResult<Node> {
        self.expect("struct")?;
        let mut children = vec![self.identifier()?];
        self.expect("{")?;
        while !self.eat("}") {
            let ty = self.type_name()?;
            let name = self.identifier()?;
            self.expect(";")?;
            children.push(Node::new(NodeKind::VariableDeclaration, vec![ty, name]));
        }
        Ok(Node::new(NodeKind::StructDefinition, children))
    }

    fn enum_definition(&mut self) -> PResult<Node> {
        self.expect("enum")?;
        let mut children = vec![self.identifier()?];
        self.expect("{")?;
        while !self.eat("}") {
            children.push(self.identifier()?);
            if !self.eat(",") {
                self.expect("}")?;
                break;
            }
        }
        Ok(Node::new(NodeKind::EnumDefinition, children))
    }

    fn using_for(&mut self) -> PResult<Node> {
        self.expect("using")?;
        let mut children = Vec::new();
        if self.eat("{") {
            while !self.eat("}") {
                children.push(self.user_type_path()?);
                if self.eat("as") {
                    self.bump();
                }
                self.eat(",");
            }
        } else {
            children.push(self.user_type_path()?);
        }
        self.expect("for")?;
        if self.eat("*") {
            children.push(Node::leaf(NodeKind::Identifier, "*"));
        } else {
            children.push(self.type_name()?);
        }
        if self.at("global") {
            self.pos += 1;
        }
        self.expect(";")?;
        Ok(Node::new(NodeKind::UsingForDirective, children))
    }

    fn state_variable(&mut self) -> PResult<Node> {
        let mut children = vec![self.type_name()?];
        loop {
            if self.at_any(&["public", "private", "internal", "constant", "immutable", "transient"]) {
                children.push(Node::leaf(NodeKind::Specifier, self.bump().text.clone()));
            } else if self.at("override") {
                children.push(self.override_specifier()?);
            } else {
                break;
            }
        }
        children.push(self.identifier()?);
        if self.eat("=") {
            children.push(self.expression()?);
        }
        self.expect(";")?;
        Ok(Node::new(NodeKind::StateVariableDeclaration, children))
    }

    // ---------------------------------------------------------------- types

    fn user_type_path(&mut self) -> PResult<Node> {
        let mut parts = vec![self.any_word()?];
        while self.at(".") && self.peek_at(1).is_some_and(|t| t.kind == TokenKind::Word) {
            self.pos += 1;
            parts.push(self.any_word()?);
        }
        Ok(Node::new(NodeKind::UserDefinedTypeName, parts))
    }

    fn type_name(&mut self) -> PResult<Node> {
        self.enter()?;
        let mut ty = if self.at("mapping") {
            self.pos += 1;
            self.expect("(")?;
            let key = self.type_name()?;
            if self.at_identifier() {
                self.pos += 1;
            }
            self.expect("=>")?;
            let value = self.type_name()?;
            if self.at_identifier() {
                self.pos += 1;
            }
            self.expect(")")?;
            Node::new(NodeKind::Mapping, vec![key, value])
        } else if self.at("function") {
            self.pos += 1;
            let mut children = vec![self.parameter_list(NodeKind::ParameterList)?];
            while self.at_any(FUNCTION_SPECIFIERS) {
                children.push(Node::leaf(NodeKind::Specifier, self.bump().text.clone()));
            }
            if self.eat("returns") {
                children.push(self.parameter_list(NodeKind::ReturnParameters)?);
            }
            Node::new(NodeKind::FunctionTypeName, children)
        } else if self.peek().is_some_and(|t| is_elementary_type(&t.text)) || self.at("var") {
            let mut name = self.bump().text.clone();
            if name == "address" && self.eat("payable") {
                name.push_str(" payable");
            }
            Node::leaf(NodeKind::ElementaryTypeName, name)
        } else if self.at_identifier() {
            self.user_type_path()?
        } else {
            return self.error("expected type name");
        };
        while self.at("[") {
            self.pos += 1;
            let mut children = vec![ty];
            if !self.at("]") {
                children.push(self.expression()?);
            }
            self.expect("]")?;
            ty = Node::new(NodeKind::ArrayTypeName, children);
        }
        self.leave();
        Ok(ty)
    }

    // ----------------------------------------------------------- statements

    fn block(&mut self) -> PResult<Node> {
        self.enter()?;
        self.expect("{")?;
        let mut statements = Vec::new();
        while !self.eat("}") {
            if self.at_eof() {
                return self.error("unterminated block");
            }
            statements.push(self.statement()?);
        }
        self.leave();
        Ok(Node::new(NodeKind::Block, statements))
    }

    fn statement(&mut self) -> PResult<Node> {
        self.enter()?;
        let node = self.statement_inner()?;
        self.leave();
        Ok(node)
    }

    fn statement_inner(&mut self) -> PResult<Node> {
        match self.text() {
            "{" => self.block(),
            "unchecked" if self.text_at(1) == "{" => {
                self.pos += 1;
                let block = self.block()?;
                Ok(Node::new(NodeKind::UncheckedBlock, block.children))
            }
            "if" => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.expression()?;
                self.expect(")")?;
                let mut children = vec![cond, self.statement()?];
                if self.eat("else") {
                    children.push(self.statement()?);
                }
                Ok(Node::new(NodeKind::IfStatement, children))
            }
            "for" => {
                self.pos += 1;
                self.expect("(")?;
                let init = if self.eat(";") {
                    Node::marker(NodeKind::Empty)
                } else {
                    self.simple_statement()?
                };
                let cond = if self.at(";") {
                    Node::marker(NodeKind::Empty)
                } else {
                    self.expression()?
                };
                self.expect(";")?;
                let step = if self.at(")") {
                    Node::marker(NodeKind::Empty)
                } else {
                    self.expression()?
                };
                self.expect(")")?;
                let body = self.statement()?;
                Ok(Node::new(NodeKind::ForStatement, vec![init, cond, step, body]))
            }
            "while" => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.expression()?;
                self.expect(")")?;
                let body = self.statement()?;
                Ok(Node::new(NodeKind::WhileStatement, vec![cond, body]))
            }
            "do" => {
                self.pos += 1;
                let body = self.statement()?;
                self.expect("while")?;
                self.expect("(")?;
                let cond = self.expression()?;
                self.expect(")")?;
                self.expect(";")?;
                Ok(Node::new(NodeKind::DoWhileStatement, vec![body, cond]))
            }
            "continue" => self.keyword_statement(NodeKind::Continue),
            "break" => self.keyword_statement(NodeKind::Break),
            "throw" => self.keyword_statement(NodeKind::Throw),
            "return" => {
                self.pos += 1;
                let mut children = Vec::new();
                if !self.at(";") {
                    children.push(self.expression()?);
                }
                self.expect(";")?;
                Ok(Node::new(NodeKind::Return, children))
            }
            "emit" => {
                self.pos += 1;
                let call = self.expression()?;
                self.expect(";")?;
                Ok(Node::new(NodeKind::EmitStatement, vec![call]))
            }
            "revert" if self.peek_at(1).is_some_and(|t| t.kind == TokenKind::Word) => {
                self.pos += 1;
                let call = self.expression()?;
                self.expect(";")?;
                Ok(Node::new(NodeKind::RevertStatement, vec![call]))
            }
            "_" if self.text_at(1) == ";" => {
                self.pos += 2;
                Ok(Node::marker(NodeKind::PlaceholderStatement))
            }
            "assembly" => self.inline_assembly(),
            "try" => self.try_statement(),
            _ => self.simple_statement(),
        }
    }

    fn keyword_statement(&mut self, kind: NodeKind) -> PResult<Node> {
        self.pos += 1;
        self.expect(";")?;
        Ok(Node::marker(kind))
    }

    fn inline_assembly(&mut self) -> PResult<Node> {
        self.expect("assembly")?;
        if self.peek().is_some_and(|t| t.kind == TokenKind::Str) {
            self.pos += 1;
        }
        if self.eat("(") {
            while !self.eat(")") {
                if self.at_eof() {
                    return self.error("unterminated assembly flags");
                }
                self.pos += 1;
            }
        }
        self.expect("{")?;
        let mut depth = 1usize;
        while depth > 0 {
            if self.at_eof() {
                return self.error("unterminated assembly block");
            }
            if self.at("{") {
                depth += 1;
            } else if self.at("}") {
                depth -= 1;
            }
            self.pos += 1;
        }
        Ok(Node::marker(NodeKind::InlineAssembly))
    }

    fn try_statement(&mut self) -> PResult<Node> {
        self.expect("try")?;
        let mut children = vec![self.expression()?];
        if self.eat("returns") {
            children.push(self.parameter_list(NodeKind::ReturnParameters)?);
        }
        children.push(self.block()?);
        while self.eat("catch") {
            let mut clause = Vec::new();
            if self.at_identifier() {
                clause.push(self.identifier()?);
            }
            if self.at("(") {
                clause.push(self.parameter_list(NodeKind::ParameterList)?);
            }
            clause.push(self.block()?);
            children.push(Node::new(NodeKind::CatchClause, clause));
        }
        Ok(Node::new(NodeKind::TryStatement, children))
    }

    /// Variable declaration or expression statement, including the trailing `;`.
    fn simple_statement(&mut self) -> PResult<Node> {
        if let Some(decl) = self.try_variable_declaration()? {
            return Ok(decl);
        }
        let expr = self.expression()?;
        self.expect(";")?;
        Ok(Node::new(NodeKind::ExpressionStatement, vec![expr]))
    }

    fn try_variable_declaration(&mut self) -> PResult<Option<Node>> {
        let start = self.pos;

        if self.eat("var") {
            let mut children = Vec::new();
            if self.eat("(") {
                let mut names = Vec::new();
                loop {
                    if self.at_identifier() {
                        names.push(Node::new(NodeKind::VariableDeclaration, vec![self.identifier()?]));
                    } else {
                        names.push(Node::marker(NodeKind::Empty));
                    }
                    if self.eat(")") {
                        break;
                    }
                    self.expect(",")?;
                }
                children.push(Node::new(NodeKind::TupleExpression, names));
            } else {
                children.push(Node::new(NodeKind::VariableDeclaration, vec![self.identifier()?]));
            }
            if self.eat("=") {
                children.push(self.expression()?);
            }
            self.expect(";")?;
            return Ok(Some(Node::new(NodeKind::VariableDeclarationStatement, children)));
        }

        if self.at("(") {
            if let Ok(Some(decl)) = self.tuple_declaration() {
                return Ok(Some(decl));
            }
            self.pos = start;
            return Ok(None);
        }

        let saved_depth = self.depth;
        let declaration = (|| -> PResult<Option<Node>> {
            let ty = self.type_name()?;
            let mut children = vec![ty];
            while self.at_any(STORAGE_LOCATIONS) {
                children.push(Node::leaf(NodeKind::Specifier, self.bump().text.clone()));
            }
            if !self.at_identifier() {
                return Ok(None);
            }
            children.push(self.identifier()?);
            let decl = Node::new(NodeKind::VariableDeclaration, children);
            let mut stmt = vec![decl];
            if self.eat("=") {
                stmt.push(self.expression()?);
            }
            self.expect(";")?;
            Ok(Some(Node::new(NodeKind::VariableDeclarationStatement, stmt)))
        })();
        match declaration {
            Ok(Some(node)) => Ok(Some(node)),
            Ok(None) | Err(ParseError::Syntax { .. }) => {
                self.pos = start;
                self.depth = saved_depth;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// `(uint a, , bytes memory b) = f();`
    fn tuple_declaration(&mut self) -> PResult<Option<Node>> {
        self.expect("(")?;
        let mut slots = Vec::new();
        loop {
            if self.at(",") || self.at(")") {
                slots.push(Node::marker(NodeKind::Empty));
            } else {
                let mut children = vec![self.type_name()?];
                while self.at_any(STORAGE_LOCATIONS) {
                    children.push(Node::leaf(NodeKind::Specifier, self.bump().text.clone()));
                }
                if !self.at_identifier() {
                    return Ok(None);
                }
                children.push(self.identifier()?);
                slots.push(Node::new(NodeKind::VariableDeclaration, children));
            }
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        if !slots.iter().any(|s| s.kind == NodeKind::VariableDeclaration) {
            return Ok(None);
        }
        self.expect("=")?;
        let value = self.expression()?;
        self.expect(";")?;
        Ok(Some(Node::new(
            NodeKind::VariableDeclarationStatement,
            vec![Node::new(NodeKind::TupleExpression, slots), value],
        )))
    }

    // ---------------------------------------------------------- expressions

    fn expression(&mut self) -> PResult<Node> {
        self.enter()?;
        let lhs = self.conditional()?;
        let node = if self.at_any(ASSIGNMENT_OPS) {
            let op = self.bump().text.clone();
            let rhs = self.expression()?;
            Node::with_value(NodeKind::Assignment, op, vec![lhs, rhs])
        } else {
            lhs
        };
        self.leave();
        Ok(node)
    }

    fn conditional(&mut self) -> PResult<Node> {
        let cond = self.binary(0)?;
        if self.eat("?") {
            let yes = self.expression()?;
            self.expect(":")?;
            let no = self.expression()?;
            return Ok(Node::new(NodeKind::Conditional, vec![cond, yes, no]));
        }
        Ok(cond)
    }

    fn binary_precedence(&self) -> Option<u8> {
        let tok = self.peek()?;
        if tok.kind != TokenKind::Punct {
            return None;
        }
        Some(match tok.text.as_str() {
            "||" => 1,
            "&&" => 2,
            "==" | "!=" => 3,
            "<" | ">" | "<=" | ">=" => 4,
            "|" => 5,
            "^" => 6,
            "&" => 7,
            "<<" | ">>" | ">>>" => 8,
            "+" | "-" => 9,
            "*" | "/" | "%" => 10,
            "**" => 11,
            _ => return None,
        })
    }

    fn binary(&mut self, min: u8) -> PResult<Node> {
        self.enter()?;
        let mut lhs = self.unary()?;
        while let Some(prec) = self.binary_precedence() {
            if prec < min {
                break;
            }
            let op = self.bump().text.clone();
            // `**` is right-associative.
            let next = if op == "**" { prec } else { prec + 1 };
            let rhs = self.binary(next)?;
            lhs = Node::with_value(NodeKind::BinaryOperation, op, vec![lhs, rhs]);
        }
        self.leave();
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Node> {
        if self.at_any(&["!", "~", "-", "+", "++", "--", "delete"]) {
            self.enter()?;
            let op = self.bump().text.clone();
            let operand = self.unary()?;
            self.leave();
            return Ok(Node::with_value(NodeKind::UnaryOperation, op, vec![operand]));
        }
        self.postfix()
    }

    fn call_arguments(&mut self) -> PResult<Vec<Node>> {
        self.expect("(")?;
        let mut args = Vec::new();
        if self.at("{") {
            self.pos += 1;
            args.push(self.name_values("}")?);
            self.expect(")")?;
            return Ok(args);
        }
        if !self.eat(")") {
            loop {
                args.push(self.expression()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(args)
    }

    fn name_values(&mut self, close: &str) -> PResult<Node> {
        let mut pairs = Vec::new();
        while !self.eat(close) {
            let name = self.any_word()?;
            self.expect(":")?;
            let value = self.expression()?;
            pairs.push(Node::new(NodeKind::NameValue, vec![name, value]));
            if !self.eat(",") {
                self.expect(close)?;
                break;
            }
        }
        Ok(Node::new(NodeKind::NameValue, pairs))
    }

    fn postfix(&mut self) -> PResult<Node> {
        let mut expr = self.primary()?;
        loop {
            if self.at("(") {
                let mut children = vec![expr];
                children.extend(self.call_arguments()?);
                expr = Node::new(NodeKind::FunctionCall, children);
            } else if self.at("[") {
                self.pos += 1;
                let mut children = vec![expr];
                let kind = if self.eat("]") {
                    NodeKind::IndexAccess
                } else {
                    let mut kind = NodeKind::IndexAccess;
                    if self.eat(":") {
                        kind = NodeKind::IndexRangeAccess;
                        children.push(Node::marker(NodeKind::Empty));
                        if !self.at("]") {
                            children.push(self.expression()?);
                        }
                    } else {
                        children.push(self.expression()?);
                        if self.eat(":") {
                            kind = NodeKind::IndexRangeAccess;
                            if !self.at("]") {
                                children.push(self.expression()?);
                            }
                        }
                    }
                    self.expect("]")?;
                    kind
                };
                expr = Node::new(kind, children);
            } else if self.at(".") {
                self.pos += 1;
                let member = self.any_word()?;
                expr = Node::new(NodeKind::MemberAccess, vec![expr, member]);
            } else if self.at("{") && self.peek_at(1).is_some_and(|t| t.kind == TokenKind::Word) && self.text_at(2) == ":" {
                self.pos += 1;
                let options = self.name_values("}")?;
                expr = Node::new(NodeKind::FunctionCallOptions, vec![expr, options]);
            } else if self.at("++") || self.at("--") {
                let op = self.bump().text.clone();
                expr = Node::with_value(NodeKind::UnaryOperationPostfix, op, vec![expr]);
            } else {
                return Ok(expr);
            }
        }
    }

    fn primary(&mut self) -> PResult<Node> {
        let Some(tok) = self.peek() else {
            return self.error("unexpected end of input");
        };
        match tok.kind {
            TokenKind::Number => {
                self.pos += 1;
                let mut text = tok.text.clone();
                if self.at_any(ETHER_UNITS) {
                    text.push(' ');
                    text.push_str(&self.bump().text);
                }
                Ok(Node::leaf(NodeKind::NumberLiteral, text))
            }
            TokenKind::Str => {
                let mut text = self.bump().text.clone();
                while self.peek().is_some_and(|t| t.kind == TokenKind::Str) {
                    text.push(' ');
                    text.push_str(&self.bump().text);
                }
                Ok(Node::leaf(NodeKind::StringLiteral, text))
            }
            TokenKind::HexStr => Ok(Node::leaf(NodeKind::HexLiteral, self.bump().text.clone())),
            TokenKind::Punct => match tok.text.as_str() {
                "(" => self.tuple(),
                "[" => {
                    self.pos += 1;
                    let mut items = Vec::new();
                    if !self.eat("]") {
                        loop {
                            items.push(self.expression()?);
                            if self.eat("]") {
                                break;
                            }
                            self.expect(",")?;
                        }
                    }
                    Ok(Node::new(NodeKind::InlineArray, items))
                }
                other => self.error(format!("unexpected {other:?} in expression")),
            },
            TokenKind::Word => match tok.text.as_str() {
                "true" | "false" => Ok(Node::leaf(NodeKind::BoolLiteral, self.bump().text.clone())),
                "new" => {
                    self.pos += 1;
                    let ty = self.type_name()?;
                    Ok(Node::new(NodeKind::NewExpression, vec![ty]))
                }
                "payable" | "type" => Ok(Node::leaf(NodeKind::Identifier, self.bump().text.clone())),
                word if is_elementary_type(word) => {
                    let mut name = self.bump().text.clone();
                    if name == "address" && self.at("payable") {
                        self.pos += 1;
                        name.push_str(" payable");
                    }
                    Ok(Node::leaf(NodeKind::ElementaryTypeName, name))
                }
                _ => self.identifier(),
            },
        }
    }

    fn tuple(&mut self) -> PResult<Node> {
        self.expect("(")?;
        let mut items = Vec::new();
        let mut commas = 0;
        loop {
            if self.at(",") || self.at(")") {
                items.push(Node::marker(NodeKind::Empty));
            } else {
                items.push(self.expression()?);
            }
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
            commas += 1;
        }
        if commas == 0 && items[0].kind != NodeKind::Empty {
            // Plain parentheses carry no structure of their own.
            return Ok(items.pop().expect("one item"));
        }
        Ok(Node::new(NodeKind::TupleExpression, items))
    }
}
