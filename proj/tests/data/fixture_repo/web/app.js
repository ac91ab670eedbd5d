function handleRequest(req) {
  const expr = req.query.expr;
  return compute(expr);
}

const validateInput = (input) => {
  return input.length > 0;
};
